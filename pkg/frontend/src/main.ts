// Single-page wiring: gallery on the left, preview and tag form on the
// right, search panel in the header. All mutations go through PUT
// /api/images/{id}/tags; the UI holds no other persistence path.

import {
    ApiError,
    convert,
    getTags,
    imageUrl,
    listImages,
    putTags,
    search,
    type ImageSummary,
    type SearchPredicate,
} from "./api.js";
import {
    EMPTY_FORM,
    extrasOf,
    formFromMetadata,
    isDirty,
    payloadFromForm,
    routeIssues,
    SEX_CHOICES,
    type TagForm,
} from "./form.js";
import { badgeOf, childDir, downloadNameOf, fileNameOf, parentOf } from "./state.js";

const $ = <T extends HTMLElement>(id: string): T => {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
};

interface Selection {
    image: ImageSummary;
    stored: Record<string, unknown> | null;
    contentHash: string;
    loadedForm: TagForm;
}

let currentDir = "";
let searchActive = false;
let selection: Selection | null = null;

function toast(message: string, kind: "info" | "error" = "info"): void {
    const host = $("toasts");
    const node = document.createElement("div");
    node.className = `toast ${kind}`;
    node.textContent = message;
    host.appendChild(node);
    setTimeout(() => node.remove(), 6000);
}

function describe(error: unknown): string {
    if (error instanceof ApiError) return `${error.code}: ${error.message}`;
    return String(error);
}

// ---------------------------------------------------------------- gallery

function renderGallery(images: ImageSummary[], subdirectories: string[]): void {
    const crumbs = $("crumbs");
    crumbs.textContent = searchActive ? "search results" : `/${currentDir}`;
    const dirHost = $("dirs");
    dirHost.replaceChildren();
    if (!searchActive) {
        if (currentDir) {
            const up = document.createElement("button");
            up.textContent = "↑ up";
            up.addEventListener("click", () => { void openDir(parentOf(currentDir)); });
            dirHost.appendChild(up);
        }
        for (const name of subdirectories) {
            const button = document.createElement("button");
            button.textContent = `\u{1F4C1} ${name}`;
            button.addEventListener("click", () => { void openDir(childDir(currentDir, name)); });
            dirHost.appendChild(button);
        }
    }
    const grid = $("gallery");
    grid.replaceChildren();
    if (images.length === 0) {
        const empty = document.createElement("p");
        empty.className = "empty";
        empty.textContent = searchActive ? "no matches" : "no images here";
        grid.appendChild(empty);
        return;
    }
    for (const image of images) {
        const cell = document.createElement("figure");
        cell.className = "cell";
        if (selection?.image.id === image.id) cell.classList.add("selected");
        const img = document.createElement("img");
        img.src = imageUrl(image.id);
        img.alt = image.relative_path;
        img.loading = "lazy";
        const caption = document.createElement("figcaption");
        const badge = document.createElement("span");
        badge.className = `badge ${badgeOf(image)}`;
        badge.textContent = badgeOf(image);
        caption.textContent = fileNameOf(image.relative_path);
        caption.appendChild(badge);
        cell.append(img, caption);
        cell.addEventListener("click", () => { void select(image); });
        grid.appendChild(cell);
    }
}

async function openDir(dir: string): Promise<void> {
    try {
        const listing = await listImages(dir);
        currentDir = listing.directory;
        searchActive = false;
        $("clear-search").hidden = true;
        renderGallery(listing.images, listing.subdirectories);
    } catch (error) {
        toast(describe(error), "error");
    }
}

async function refreshGallery(): Promise<void> {
    if (!searchActive) await openDir(currentDir);
}

// ------------------------------------------------------------------ form

function formInputs(): Record<keyof TagForm, HTMLInputElement | HTMLSelectElement> {
    return {
        patientId: $<HTMLInputElement>("f-patient-id"),
        patientName: $<HTMLInputElement>("f-patient-name"),
        patientSex: $<HTMLSelectElement>("f-patient-sex"),
        dateTime: $<HTMLInputElement>("f-date-time"),
        diagnosis: $<HTMLInputElement>("f-diagnosis"),
    };
}

function readForm(): TagForm {
    const inputs = formInputs();
    const sex = inputs.patientSex.value;
    return {
        patientId: inputs.patientId.value,
        patientName: inputs.patientName.value,
        patientSex: (SEX_CHOICES as readonly string[]).includes(sex) ? (sex as TagForm["patientSex"]) : "",
        dateTime: inputs.dateTime.value,
        diagnosis: inputs.diagnosis.value,
    };
}

function writeForm(form: TagForm): void {
    const inputs = formInputs();
    inputs.patientId.value = form.patientId;
    inputs.patientName.value = form.patientName;
    inputs.patientSex.value = form.patientSex;
    inputs.dateTime.value = form.dateTime;
    inputs.diagnosis.value = form.diagnosis;
    clearIssues();
    updateDirtyFlag();
}

function clearIssues(): void {
    for (const node of document.querySelectorAll(".issue")) node.textContent = "";
}

function updateDirtyFlag(): void {
    const flag = $("dirty-flag");
    flag.hidden = !(selection && isDirty(readForm(), selection.loadedForm));
}

function renderExtras(): void {
    const host = $("extras");
    host.replaceChildren();
    const entries = selection ? extrasOf(selection.stored) : [];
    for (const [key, value] of entries) {
        const row = document.createElement("div");
        row.className = "extra";
        row.textContent = `${key} = ${value}`;
        host.appendChild(row);
    }
}

async function select(image: ImageSummary): Promise<void> {
    try {
        const tags = await getTags(image.id);
        selection = {
            image,
            stored: tags.metadata,
            contentHash: tags.content_hash,
            loadedForm: formFromMetadata(tags.metadata),
        };
        $("preview-empty").hidden = true;
        const preview = $<HTMLImageElement>("preview");
        preview.hidden = false;
        preview.src = imageUrl(image.id);
        $("selected-name").textContent = image.relative_path;
        $<HTMLButtonElement>("save").disabled = false;
        $<HTMLButtonElement>("convert").disabled = !tags.tagged;
        writeForm(selection.loadedForm);
        renderExtras();
        for (const cell of document.querySelectorAll(".cell")) cell.classList.remove("selected");
    } catch (error) {
        toast(describe(error), "error");
    }
}

async function save(): Promise<void> {
    if (!selection) return;
    clearIssues();
    const draft = readForm();
    let payload: Record<string, unknown>;
    try {
        payload = payloadFromForm(draft, selection.loadedForm, selection.stored);
    } catch (error) {
        toast(String(error), "error");
        return;
    }
    try {
        const saved = await putTags(selection.image.id, payload, selection.contentHash);
        selection = {
            ...selection,
            stored: saved.metadata,
            contentHash: saved.content_hash,
            loadedForm: formFromMetadata(saved.metadata),
        };
        selection.image.tagged = saved.tagged;
        $<HTMLButtonElement>("convert").disabled = !saved.tagged;
        writeForm(selection.loadedForm);
        renderExtras();
        toast("saved");
        await refreshGallery();
    } catch (error) {
        if (error instanceof ApiError && error.status === 409) {
            if (window.confirm("File changed on disk since it was loaded. Reload it?")) {
                await select(selection.image);
            }
            return;
        }
        if (error instanceof ApiError && error.status === 422 && error.issues.length) {
            const routed = routeIssues(error.issues);
            for (const [field, message] of Object.entries(routed.byField)) {
                $(`issue-${field}`).textContent = message ?? "";
            }
            for (const message of routed.general) toast(message, "error");
            return;
        }
        toast(describe(error), "error");
    }
}

async function convertSelected(): Promise<void> {
    if (!selection) return;
    try {
        const blob = await convert(selection.image.id);
        const link = document.createElement("a");
        link.href = URL.createObjectURL(blob);
        link.download = downloadNameOf(selection.image.relative_path);
        link.click();
        URL.revokeObjectURL(link.href);
    } catch (error) {
        toast(describe(error), "error");
    }
}

// ---------------------------------------------------------------- search

async function runSearch(): Promise<void> {
    const diagnosis = $<HTMLInputElement>("s-diagnosis").value.trim();
    const sex = $<HTMLSelectElement>("s-sex").value;
    const from = $<HTMLInputElement>("s-from").value;
    const to = $<HTMLInputElement>("s-to").value;
    const predicates: SearchPredicate[] = [];
    if (diagnosis) predicates.push({ field: "study_description", op: "contains", value: diagnosis });
    if (sex) predicates.push({ field: "patient_sex", op: "equals", value: sex });
    if (from || to) {
        predicates.push({
            field: "study_date",
            op: "date_range",
            start: from ? from.replaceAll("-", "") : undefined,
            end: to ? to.replaceAll("-", "") : undefined,
        });
    }
    try {
        const results = await search(predicates);
        searchActive = true;
        $("clear-search").hidden = false;
        renderGallery(results, []);
    } catch (error) {
        toast(describe(error), "error");
    }
}

// ----------------------------------------------------------------- boot

export function boot(): void {
    $("search-form").addEventListener("submit", (event) => {
        event.preventDefault();
        void runSearch();
    });
    $("clear-search").addEventListener("click", () => { void openDir(currentDir); });
    $("tag-form").addEventListener("submit", (event) => {
        event.preventDefault();
        void save();
    });
    $("tag-form").addEventListener("input", updateDirtyFlag);
    $("convert").addEventListener("click", () => { void convertSelected(); });
    void openDir("");
}

if (typeof document !== "undefined" && document.getElementById("gallery")) {
    boot();
}
