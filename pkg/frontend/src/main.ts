/** DOM bootstrap: routes on the location hash, delegates all markup to the
 * pure renderers, and wires form events to the API client. */

import { ApiError, fetchResult, requestRedo, requestSupport, submitDiagnosis, submitQuestionnaire } from "./api.js";
import {
  denialPage,
  faqPage,
  pendingPage,
  resultPage,
  submittedScreen,
  topPageForm,
} from "./render.js";
import { canSubmit, emptyForm, type QuestionnaireStatus, type TopFormState } from "./state.js";
import type { QuestionnairePayload, ResultDocument } from "./types.js";

const root = document.getElementById("app") as HTMLElement;

let formState: TopFormState = { ...emptyForm };
let questionnaireStatus: QuestionnaireStatus = "unanswered";

function currentToken(): string | null {
  const match = /^#result\/(.+)$/.exec(location.hash);
  return match ? decodeURIComponent(match[1]) : null;
}

function readForm(form: HTMLFormElement): TopFormState {
  const data = new FormData(form);
  return {
    email: String(data.get("email") ?? ""),
    location: String(data.get("location") ?? "") as TopFormState["location"],
    referral: String(data.get("referral") ?? "") as TopFormState["referral"],
    consent: data.get("consent") !== null,
    verification: String(data.get("verification") ?? ""),
  };
}

function wireTopPage(apiError: string | null): void {
  root.innerHTML = topPageForm(formState, apiError);
  const form = root.querySelector<HTMLFormElement>("#diagnosis-form");
  if (!form) return;
  form.addEventListener("input", () => {
    formState = readForm(form);
    const button = form.querySelector<HTMLButtonElement>("#submit-diagnosis");
    if (button) button.disabled = !canSubmit(formState);
  });
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    formState = readForm(form);
    try {
      await submitDiagnosis(formState);
      formState = { ...emptyForm }; // the e-mail never outlives the request
      root.innerHTML = submittedScreen();
    } catch (error) {
      const message =
        error instanceof ApiError
          ? error.retryAfter
            ? `The previous request for this address is still running. Please retry in ${error.retryAfter} seconds.`
            : error.detail
          : "The request could not be sent. Please try again.";
      wireTopPage(message);
    }
  });
}

function collectQuestionnaire(form: HTMLFormElement): QuestionnairePayload {
  const data = new FormData(form);
  const payload: QuestionnairePayload = {};
  const likert = (name: string) => {
    const raw = data.get(name);
    return raw ? (Number(raw) as 1 | 2 | 3 | 4 | 5) : undefined;
  };
  payload.continue_intent = likert("continue_intent");
  const helpful = data.get("helpfulness");
  if (helpful) payload.helpfulness = helpful as QuestionnairePayload["helpfulness"];
  const text = (name: string) => {
    const raw = data.get(name);
    return raw ? String(raw) : undefined;
  };
  payload.good_points = text("good_points");
  payload.bad_points = text("bad_points");
  payload.wish_to_take_measures = likert("wish_to_take_measures");
  payload.can_take_measures_myself = likert("can_take_measures_myself");
  payload.measures_taken = text("measures_taken");
  const completed = data.get("measures_completed");
  if (completed) payload.measures_completed = completed as "yes" | "no";
  payload.challenges = text("challenges");
  return payload;
}

function wireResultPage(result: ResultDocument, token: string): void {
  root.innerHTML = resultPage(result, token, questionnaireStatus);
  root.querySelector<HTMLButtonElement>("#redo")?.addEventListener("click", async () => {
    try {
      await requestRedo(token);
      root.innerHTML = submittedScreen();
    } catch {
      wireResultPage(result, token);
    }
  });
  root
    .querySelector<HTMLButtonElement>("#request-support")
    ?.addEventListener("click", async () => {
      const message = prompt("Describe what you need help with:") ?? "";
      if (!message) return;
      try {
        await requestSupport(token, message);
        alert("Thank you. The operators will contact you by e-mail.");
      } catch {
        alert("Sending failed. Please try again later.");
      }
    });
  const questionnaire = root.querySelector<HTMLFormElement>("#questionnaire-form");
  questionnaire?.addEventListener("submit", async (event) => {
    event.preventDefault();
    try {
      await submitQuestionnaire(collectQuestionnaire(questionnaire), token);
      questionnaireStatus = "submitted";
    } catch {
      questionnaireStatus = "failed"; // result stays visible, retry offered
    }
    wireResultPage(result, token);
  });
  root.querySelector<HTMLButtonElement>("#questionnaire-skip")?.addEventListener("click", () => {
    questionnaireStatus = "submitted";
    wireResultPage(result, token);
  });
}

async function route(): Promise<void> {
  const token = currentToken();
  if (location.hash === "#faq") {
    root.innerHTML = faqPage();
    return;
  }
  if (!token) {
    wireTopPage(null);
    return;
  }
  try {
    const result = await fetchResult(token);
    if (result.status === "done") {
      wireResultPage(result, token);
    } else {
      root.innerHTML = pendingPage();
    }
  } catch {
    // Unknown token, foreign session, blocked cookie: all the same page.
    root.innerHTML = denialPage();
  }
}

window.addEventListener("hashchange", () => void route());
void route();
