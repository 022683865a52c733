import type { Location, Referral } from "./types.js";

export interface TopFormState {
  email: string;
  location: Location | "";
  referral: Referral | "";
  consent: boolean;
  verification: string;
}

export const emptyForm: TopFormState = {
  email: "",
  location: "",
  referral: "",
  consent: false,
  verification: "",
};

const EMAIL_RE = /^[^@\s]+@[^@\s]+\.[^@\s]+$/;

export function emailValid(email: string): boolean {
  return EMAIL_RE.test(email);
}

/** Submission stays blocked until the consent box is ticked and the
 * verification widget produced a token; this is the gate the tests pin. */
export function canSubmit(state: TopFormState): boolean {
  return (
    state.consent &&
    emailValid(state.email) &&
    state.location !== "" &&
    state.referral !== "" &&
    state.verification !== ""
  );
}

export type QuestionnaireStatus = "unanswered" | "submitted" | "failed";
