/** Pure HTML renderers. Every function maps state to a markup string and
 * nothing else, so the test suite can snapshot them without a browser. */

import type { Finding, ResultDocument } from "./types.js";
import { canSubmit, type QuestionnaireStatus, type TopFormState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function unescapeHtml(text: string): string {
  return text
    .replace(/&quot;/g, '"')
    .replace(/&gt;/g, ">")
    .replace(/&lt;/g, "<")
    .replace(/&amp;/g, "&");
}

const LOCATIONS: [string, string][] = [
  ["home", "Home"],
  ["workplace", "Workplace"],
  ["outside", "Outside home/office"],
  ["other", "Other"],
];

const REFERRALS: [string, string][] = [
  ["media", "TV, newspaper, or online media"],
  ["web_search", "Web search"],
  ["social", "Social media"],
  ["university", "University website"],
  ["lecture", "Lecture or seminar"],
  ["other", "Other"],
];

function options(pairs: [string, string][], selected: string): string {
  const placeholder = `<option value="" ${selected === "" ? "selected" : ""}>Select...</option>`;
  return (
    placeholder +
    pairs
      .map(
        ([value, label]) =>
          `<option value="${value}" ${value === selected ? "selected" : ""}>${label}</option>`,
      )
      .join("")
  );
}

export function topPageForm(state: TopFormState, apiError: string | null = null): string {
  const disabled = canSubmit(state) ? "" : "disabled";
  const emailNote =
    state.email !== "" && !canSubmit(state) && !/^[^@\s]+@[^@\s]+\.[^@\s]+$/.test(state.email)
      ? '<p class="field-error">Please enter a valid e-mail address.</p>'
      : "";
  const errorBox = apiError ? `<p class="api-error" role="alert">${escapeHtml(apiError)}</p>` : "";
  return `
<section class="top-page">
  <h1>Check your IoT devices for security risks</h1>
  <p>Infected devices can attack others without you noticing. This free check
  scans the address you are connecting from for malware activity and known
  device risks, and mails you a link to the results. Diagnostic accuracy is
  not perfect and there can be false negatives.</p>
  ${errorBox}
  <form id="diagnosis-form">
    <label>E-mail address for the result link
      <input type="email" name="email" value="${escapeHtml(state.email)}" required>
    </label>
    ${emailNote}
    <label>Where are you connecting from?
      <select name="location">${options(LOCATIONS, state.location)}</select>
    </label>
    <label>How did you hear about this service?
      <select name="referral">${options(REFERRALS, state.referral)}</select>
    </label>
    <div class="verification" data-widget="human-verification">
      <label>Verification
        <input type="text" name="verification" value="${escapeHtml(state.verification)}"
               placeholder="complete the check" aria-label="human verification">
      </label>
    </div>
    <label class="consent">
      <input type="checkbox" name="consent" ${state.consent ? "checked" : ""}>
      I agree to the <a href="#terms">terms of use</a> and start diagnosis
    </label>
    <button type="submit" id="submit-diagnosis" ${disabled}>Start Infection Diagnosis</button>
  </form>
  <p><a href="#faq">Frequently asked questions</a></p>
</section>`;
}

export function submittedScreen(): string {
  return `
<section class="submitted">
  <h1>Diagnosis requested</h1>
  <p>We are scanning now. You will receive an e-mail with a link to the
  results in a few minutes. The result page opens only in this browser, so
  please keep using it.</p>
</section>`;
}

export function findingCard(finding: Finding): string {
  const device =
    finding.device_vendor && finding.device_model
      ? `<p class="device">Affected device: ${escapeHtml(finding.device_vendor)} ${escapeHtml(finding.device_model)}</p>`
      : "";
  // The measure text is shown exactly as the API sent it; no rewriting.
  return `
<article class="finding-card" data-kind="${finding.kind}">
  <h3>${escapeHtml(finding.label)}</h3>
  ${device}
  <pre class="measure">${escapeHtml(finding.measure)}</pre>
</article>`;
}

export function resultPage(
  result: ResultDocument,
  token: string,
  questionnaire: QuestionnaireStatus = "unanswered",
): string {
  const banner = result.clean
    ? `<div class="banner banner-clean"><h2>No issues were found within the scope of this service.</h2>
       <p>New vulnerabilities appear constantly, so we recommend re-diagnosing from time to time.</p></div>`
    : `<div class="banner banner-issues"><h2>Issues were found. Please review the measures below.</h2></div>`;
  const cards = result.findings.map(findingCard).join("\n");
  const redo = result.redo_allowed
    ? `<button id="redo" data-token="${escapeHtml(token)}">Re-diagnose after taking measures</button>`
    : "";
  const support = result.clean
    ? ""
    : `<button id="request-support" data-token="${escapeHtml(token)}">Request support from the operators</button>`;
  return `
<section class="result-page">
  <p class="scope-note">${escapeHtml(result.scope_note)}</p>
  ${banner}
  <div class="findings">${cards}</div>
  <div class="actions">${redo} ${support}</div>
  ${questionnairePanel(result, questionnaire)}
</section>`;
}

export function questionnairePanel(result: ResultDocument, status: QuestionnaireStatus): string {
  if (status === "submitted") {
    return `<aside class="questionnaire"><p>Thank you for your feedback.</p></aside>`;
  }
  const retry =
    status === "failed"
      ? `<p class="api-error" role="alert">Sending failed. <button id="questionnaire-retry">Try again</button></p>`
      : "";
  const issueItems = result.clean
    ? ""
    : `
    <fieldset>
      <legend>About the reported issues</legend>
      <label>Do you wish to take the measures? (1 = no, 5 = definitely)
        ${likert("wish_to_take_measures")}
      </label>
      <label>Do you think you can take the recommended measures by yourself? (1–5)
        ${likert("can_take_measures_myself")}
      </label>
      <label>What measures did you consider to take?
        <textarea name="measures_taken"></textarea>
      </label>
      <label>Did you complete the measures?
        <select name="measures_completed"><option value=""></option>
          <option value="yes">Yes</option><option value="no">No</option></select>
      </label>
      <label>Did you have any challenges in taking measures?
        <textarea name="challenges"></textarea>
      </label>
    </fieldset>`;
  return `
<aside class="questionnaire">
  <h3>Optional feedback</h3>
  <p>Answering is voluntary and the results stay visible either way.</p>
  ${retry}
  <form id="questionnaire-form">
    <label>Would you plan to continue to use this service?
      (It's desirable to diagnose your devices regularly as new vulnerabilities
      are constantly reported and attack trends can change) (1 = no, 5 = definitely)
      ${likert("continue_intent")}
    </label>
    <fieldset class="helpfulness">
      <legend>Is this service helpful?</legend>
      <label><input type="radio" name="helpfulness" value="helpful"> &#128578; helpful</label>
      <label><input type="radio" name="helpfulness" value="neutral"> &#128528; neutral</label>
      <label><input type="radio" name="helpfulness" value="not_helpful"> &#128577; not helpful</label>
    </fieldset>
    <label>Please tell us the good points. <textarea name="good_points"></textarea></label>
    <label>Please tell us the bad points. <textarea name="bad_points"></textarea></label>
    ${issueItems}
    <button type="submit">Send feedback</button>
    <button type="button" id="questionnaire-skip">Skip</button>
  </form>
</aside>`;
}

function likert(name: string): string {
  return `<span class="likert">${[1, 2, 3, 4, 5]
    .map((n) => `<label><input type="radio" name="${name}" value="${n}">${n}</label>`)
    .join("")}</span>`;
}

/** Identical for unknown tokens, foreign sessions, and expired cookies: the
 * page must not reveal whether the token exists. */
export function denialPage(): string {
  return `
<section class="denial">
  <h1>This page is not available.</h1>
  <p>Result pages can only be opened from the browser session that requested
  the diagnosis, using the exact link from the notification e-mail. If you
  used a different browser, private browsing, or blocked cookies, please
  request a new diagnosis from the top page.</p>
  <p><a href="#top">Back to the top page</a></p>
</section>`;
}

export function pendingPage(): string {
  return `
<section class="pending">
  <h1>Diagnosis in progress</h1>
  <p>Please reload this page in a minute; you will also receive an e-mail
  when the results are ready.</p>
</section>`;
}

const FAQ: [string, string][] = [
  [
    "What is malware? What does it mean to be infected with malware?",
    "Malware is hostile software. An infected device is controlled by someone else and can be used to attack other systems, often without any visible symptom.",
  ],
  [
    "How is malware detected?",
    "We check whether your address recently contacted our sensor networks, which only attacking devices do. Because the check looks at the most recent 24 hours, please wait at least 24 hours after taking measures before re-diagnosing.",
  ],
  [
    "What should I do if my device is infected with malware?",
    "Reboot the device, then update its firmware following the manufacturer's manual. Re-diagnose after at least 24 hours.",
  ],
  [
    "What should I do if the result does not change even after restarting the router?",
    "Make sure the firmware update completed, and re-diagnose at least 24 hours after the restart. If it persists, use the support button on the result page.",
  ],
  [
    "What types of security issues can be detected?",
    "Malware activity, exposed Telnet, end-of-support models, unset admin passwords, known vulnerabilities, old firmware, published default IDs and passwords, weak default Wi-Fi passwords, and devices operable without authentication.",
  ],
  [
    "How are security issues detected?",
    "We read only what your device voluntarily shows to the Internet (service banners and its web page) and compare it against a database of device signatures and known issues. We never try passwords and never exploit anything.",
  ],
  [
    "What is firmware? How should I update the firmware?",
    "Firmware is the software built into the device. The manufacturer's manual describes the update procedure; search the web for the manufacturer name, the model, and \"manual\".",
  ],
  [
    "What are vulnerabilities?",
    "Flaws in a device's software that attackers can abuse. Vendors fix them in firmware updates, which is why updating matters.",
  ],
  [
    "Are computers and smartphones subject to inspection?",
    "The diagnosis targets devices directly reachable from the Internet at your address, typically the router. Computers and phones behind the router are generally not visible to it.",
  ],
  [
    "What is the e-mail address used for?",
    "Only to send you the completion notice with the result link, an optional re-diagnosis reminder, and occasional re-diagnosis campaigns you can unsubscribe from.",
  ],
  [
    "What information is collected and recorded?",
    "The address you connect from, the scan responses it gave, the findings, your e-mail address, and the answers you choose to give in the questionnaire.",
  ],
  [
    "How is the collected information handled?",
    "It is used to run the service and for aggregate statistics. You can request deletion of everything related to your e-mail address at any time.",
  ],
  [
    "How can I find the manual for the device?",
    "Search the web for the manufacturer name, the device model, and \"manual\". Most manufacturers publish manuals online.",
  ],
  [
    "What is Telnet?",
    "A very old remote-control protocol without encryption. Malware spreads through it, so it should be disabled on home devices.",
  ],
  [
    "What is the initial ID and password?",
    "The factory-set login printed in the manual. Because these are public, anyone can try them; change them to your own.",
  ],
  [
    "How do I choose a hard-to-guess password?",
    "Use a long, random mix of upper and lower case letters, numbers, and symbols; avoid dictionary words and never reuse a password from another service.",
  ],
  [
    "Are there any false positives/negatives in the diagnostic results?",
    "Yes. Shared addresses can cause false alarms, and devices we cannot identify can hide real issues. A clean result means no issues were found within the scope of this service, not a guarantee.",
  ],
];

export function faqPage(): string {
  const items = FAQ.map(
    ([q, a]) => `<details><summary>${escapeHtml(q)}</summary><p>${escapeHtml(a)}</p></details>`,
  ).join("\n");
  return `<section class="faq"><h1>Frequently asked questions</h1>${items}
  <p><a href="#top">Back to the top page</a></p></section>`;
}
