export const RISK_KINDS = [
  "MalwareInfection",
  "RiskyProtocolTelnet",
  "EndOfSupport",
  "AdminPasswordNotSet",
  "KnownVulnerability",
  "OldFirmware",
  "KnownDefaultId",
  "KnownDefaultCredential",
  "WeakDefaultWifiPassword",
  "NoAuthentication",
] as const;

export type RiskKind = (typeof RISK_KINDS)[number];

export interface Finding {
  kind: RiskKind;
  label: string;
  device_vendor: string | null;
  device_model: string | null;
  evidence: string;
  measure: string;
}

export interface ResultDocument {
  status: "pending" | "running" | "done" | "failed";
  requested_at: string;
  completed_at: string | null;
  clean: boolean;
  findings: Finding[];
  redo_allowed: boolean;
  scope_note: string;
}

export type Location = "home" | "workplace" | "outside" | "other";
export type Referral = "media" | "web_search" | "social" | "university" | "lecture" | "other";

export interface QuestionnairePayload {
  continue_intent?: 1 | 2 | 3 | 4 | 5;
  helpfulness?: "helpful" | "neutral" | "not_helpful";
  good_points?: string;
  bad_points?: string;
  // asked only when the diagnosis reported issues
  wish_to_take_measures?: 1 | 2 | 3 | 4 | 5;
  can_take_measures_myself?: 1 | 2 | 3 | 4 | 5;
  measures_taken?: string;
  measures_completed?: "yes" | "no";
  challenges?: string;
}
