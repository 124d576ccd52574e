// Tag form logic: mapping between the stored payload object and the five
// form inputs, dirty tracking, and validation-issue routing.
//
// The form never fabricates values: a field the user left untouched is
// passed through from the stored payload byte for byte; only fields the
// user actually changed are rewritten (the date-time picker sets both
// StudyDate and StudyTime when changed).

import type { ApiIssue } from "./api.js";

export const SEX_CHOICES = ["", "M", "F", "O"] as const;
export type SexChoice = (typeof SEX_CHOICES)[number];

export interface TagForm {
    patientId: string;
    patientName: string;
    patientSex: SexChoice;
    dateTime: string; // datetime-local value ("YYYY-MM-DDTHH:MM[:SS]") or ""
    diagnosis: string;
}

export const EMPTY_FORM: TagForm = {
    patientId: "",
    patientName: "",
    patientSex: "",
    dateTime: "",
    diagnosis: "",
};

function str(value: unknown): string {
    return typeof value === "string" ? value : "";
}

export function joinDateTime(date: string, time: string): string {
    if (!/^\d{8}$/.test(date)) return "";
    const day = `${date.slice(0, 4)}-${date.slice(4, 6)}-${date.slice(6, 8)}`;
    if (!/^\d{6}$/.test(time)) return `${day}T00:00:00`;
    return `${day}T${time.slice(0, 2)}:${time.slice(2, 4)}:${time.slice(4, 6)}`;
}

export function splitDateTime(value: string): { date: string; time: string } | null {
    const match = /^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2})(?::(\d{2}))?$/.exec(value);
    if (!match) return null;
    return {
        date: `${match[1]}${match[2]}${match[3]}`,
        time: `${match[4]}${match[5]}${match[6] ?? "00"}`,
    };
}

export function formFromMetadata(metadata: Record<string, unknown> | null): TagForm {
    if (!metadata) return { ...EMPTY_FORM };
    const sex = str(metadata["PatientSex"]);
    return {
        patientId: str(metadata["PatientID"]),
        patientName: str(metadata["PatientName"]),
        patientSex: (SEX_CHOICES as readonly string[]).includes(sex)
            ? (sex as SexChoice)
            : "",
        dateTime: joinDateTime(str(metadata["StudyDate"]), str(metadata["StudyTime"])),
        diagnosis: str(metadata["StudyDescription"]),
    };
}

export function isDirty(draft: TagForm, loaded: TagForm): boolean {
    return (
        draft.patientId !== loaded.patientId ||
        draft.patientName !== loaded.patientName ||
        draft.patientSex !== loaded.patientSex ||
        draft.dateTime !== loaded.dateTime ||
        draft.diagnosis !== loaded.diagnosis
    );
}

function applyText(
    payload: Record<string, unknown>,
    key: string,
    draftValue: string,
    loadedValue: string,
): void {
    if (draftValue === loadedValue) return; // untouched: keep stored bytes
    if (draftValue === "") {
        delete payload[key];
    } else {
        payload[key] = draftValue;
    }
}

/** Payload to PUT: the stored object with only the user's edits applied.
 *  Unknown keys (extras), UIDs and the Deidentified flag pass through. */
export function payloadFromForm(
    draft: TagForm,
    loaded: TagForm,
    stored: Record<string, unknown> | null,
): Record<string, unknown> {
    if (!(SEX_CHOICES as readonly string[]).includes(draft.patientSex)) {
        throw new Error(`sex code ${JSON.stringify(draft.patientSex)} is not selectable`);
    }
    const payload: Record<string, unknown> = { ...(stored ?? {}) };
    if (typeof payload["dicoderma"] !== "string") payload["dicoderma"] = "1.0";
    applyText(payload, "PatientID", draft.patientId, loaded.patientId);
    applyText(payload, "PatientName", draft.patientName, loaded.patientName);
    applyText(payload, "PatientSex", draft.patientSex, loaded.patientSex);
    applyText(payload, "StudyDescription", draft.diagnosis, loaded.diagnosis);
    if (draft.dateTime !== loaded.dateTime) {
        const parts = splitDateTime(draft.dateTime);
        if (parts) {
            payload["StudyDate"] = parts.date;
            payload["StudyTime"] = parts.time;
        } else if (draft.dateTime === "") {
            delete payload["StudyDate"];
            delete payload["StudyTime"];
        }
    }
    return payload;
}

const FORM_FIELD_BY_ISSUE: Record<string, keyof TagForm> = {
    patient_id: "patientId",
    PatientID: "patientId",
    patient_name: "patientName",
    PatientName: "patientName",
    patient_sex: "patientSex",
    PatientSex: "patientSex",
    study_date: "dateTime",
    StudyDate: "dateTime",
    study_time: "dateTime",
    StudyTime: "dateTime",
    study_description: "diagnosis",
    StudyDescription: "diagnosis",
};

export interface RoutedIssues {
    byField: Partial<Record<keyof TagForm, string>>;
    general: string[];
}

/** Route 422 issues to the form input they belong to. */
export function routeIssues(issues: ApiIssue[]): RoutedIssues {
    const byField: Partial<Record<keyof TagForm, string>> = {};
    const general: string[] = [];
    for (const issue of issues) {
        const key = FORM_FIELD_BY_ISSUE[issue.field];
        if (key) {
            byField[key] = byField[key] ? `${byField[key]}; ${issue.message}` : issue.message;
        } else {
            general.push(`${issue.field}: ${issue.message}`);
        }
    }
    return { byField, general };
}

/** Extras are every stored key outside the form's five fields and the
 *  bookkeeping keys; shown read-only. */
export function extrasOf(metadata: Record<string, unknown> | null): [string, string][] {
    if (!metadata) return [];
    const handled = new Set([
        "dicoderma",
        "PatientID",
        "PatientName",
        "PatientSex",
        "StudyDate",
        "StudyTime",
        "StudyDescription",
    ]);
    return Object.entries(metadata)
        .filter(([key]) => !handled.has(key))
        .map(([key, value]): [string, string] => [
            key,
            typeof value === "string" ? value : JSON.stringify(value),
        ])
        .sort((a, b) => (a[0] < b[0] ? -1 : 1));
}
