// Typed client for the tagging service API. All requests go through
// fetch so tests can stub globalThis.fetch.

export interface ImageSummary {
    id: string;
    relative_path: string;
    tagged: boolean;
    metadata: Record<string, unknown> | null;
    rows: number;
    columns: number;
}

export interface DirectoryListing {
    directory: string;
    images: ImageSummary[];
    subdirectories: string[];
}

export interface TagsResponse {
    id: string;
    tagged: boolean;
    metadata: Record<string, unknown> | null;
    content_hash: string;
}

export interface ApiIssue {
    field: string;
    rule: string;
    message: string;
}

export interface SearchPredicate {
    field: string;
    op: "equals" | "contains" | "date_range";
    value?: string;
    start?: string;
    end?: string;
}

export class ApiError extends Error {
    constructor(
        readonly status: number,
        readonly code: string,
        message: string,
        readonly issues: ApiIssue[] = [],
    ) {
        super(message);
    }
}

async function raiseForStatus(response: Response): Promise<void> {
    if (response.ok) return;
    let code = `http-${response.status}`;
    let message = response.statusText;
    let issues: ApiIssue[] = [];
    try {
        const body = await response.json();
        if (typeof body.error === "string") code = body.error;
        if (typeof body.message === "string") message = body.message;
        if (Array.isArray(body.issues)) issues = body.issues;
    } catch {
        // non-JSON error body; keep the HTTP status text
    }
    throw new ApiError(response.status, code, message, issues);
}

async function getJson<T>(url: string): Promise<T> {
    const response = await fetch(url);
    await raiseForStatus(response);
    return (await response.json()) as T;
}

export function listImages(dir = ""): Promise<DirectoryListing> {
    const query = dir ? `?dir=${encodeURIComponent(dir)}` : "";
    return getJson(`/api/images${query}`);
}

export function getTags(id: string): Promise<TagsResponse> {
    return getJson(`/api/images/${id}/tags`);
}

export async function putTags(
    id: string,
    payload: Record<string, unknown>,
    contentHash: string,
): Promise<TagsResponse> {
    const response = await fetch(`/api/images/${id}/tags`, {
        method: "PUT",
        headers: {
            "Content-Type": "application/json",
            "If-Match": `"${contentHash}"`,
        },
        body: JSON.stringify(payload),
    });
    await raiseForStatus(response);
    return (await response.json()) as TagsResponse;
}

export async function search(
    predicates: SearchPredicate[],
    caseSensitive = false,
): Promise<ImageSummary[]> {
    const response = await fetch("/api/search", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ predicates, case_sensitive: caseSensitive }),
    });
    await raiseForStatus(response);
    return (await response.json()) as ImageSummary[];
}

export async function convert(id: string): Promise<Blob> {
    const response = await fetch(`/api/images/${id}/convert`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({}),
    });
    await raiseForStatus(response);
    return await response.blob();
}

export function imageUrl(id: string): string {
    return `/api/images/${id}/file`;
}
