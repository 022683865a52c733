import type { QuestionnairePayload, ResultDocument } from "./types.js";
import type { TopFormState } from "./state.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
    public retryAfter: number | null = null,
  ) {
    super(detail);
  }
}

type FetchLike = typeof fetch;

async function reject(response: Response): Promise<never> {
  let detail = "request failed";
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body: keep the generic message
  }
  const retryAfter = response.headers.get("Retry-After");
  throw new ApiError(response.status, detail, retryAfter ? Number(retryAfter) : null);
}

export async function submitDiagnosis(
  form: TopFormState,
  fetchImpl: FetchLike = fetch,
): Promise<{ record_id: number; token: string }> {
  const body = new URLSearchParams({
    email: form.email,
    location: form.location,
    referral: form.referral,
    verification: form.verification,
  });
  const response = await fetchImpl("/api/diagnoses", {
    method: "POST",
    headers: { "Content-Type": "application/x-www-form-urlencoded" },
    body: body.toString(),
    credentials: "same-origin",
  });
  if (!response.ok) await reject(response);
  return (await response.json()) as { record_id: number; token: string };
}

export async function fetchResult(
  token: string,
  fetchImpl: FetchLike = fetch,
): Promise<ResultDocument> {
  const response = await fetchImpl(`/api/diagnoses/${encodeURIComponent(token)}`, {
    credentials: "same-origin",
  });
  if (!response.ok) await reject(response);
  return (await response.json()) as ResultDocument;
}

export async function requestRedo(token: string, fetchImpl: FetchLike = fetch): Promise<number> {
  const response = await fetchImpl(`/api/diagnoses/${encodeURIComponent(token)}/redo`, {
    method: "POST",
    credentials: "same-origin",
  });
  if (!response.ok) await reject(response);
  return ((await response.json()) as { record_id: number }).record_id;
}

export async function requestSupport(
  token: string,
  message: string,
  fetchImpl: FetchLike = fetch,
): Promise<void> {
  const response = await fetchImpl(`/api/diagnoses/${encodeURIComponent(token)}/support`, {
    method: "POST",
    body: message,
    credentials: "same-origin",
  });
  if (!response.ok) await reject(response);
}

/** The payload goes over the wire exactly as given; the server stores it verbatim. */
export async function submitQuestionnaire(
  payload: QuestionnairePayload,
  token: string | null,
  fetchImpl: FetchLike = fetch,
): Promise<void> {
  const url = token
    ? `/api/questionnaires?token=${encodeURIComponent(token)}`
    : "/api/questionnaires";
  const response = await fetchImpl(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
    credentials: "same-origin",
  });
  if (!response.ok) await reject(response);
}
