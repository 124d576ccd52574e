// Small pure helpers for gallery navigation and downloads.

import type { ImageSummary } from "./api.js";

export function parentOf(dir: string): string {
    const idx = dir.lastIndexOf("/");
    return idx === -1 ? "" : dir.slice(0, idx);
}

export function childDir(dir: string, name: string): string {
    return dir ? `${dir}/${name}` : name;
}

export function badgeOf(image: ImageSummary): "tagged" | "untagged" {
    return image.tagged ? "tagged" : "untagged";
}

export function fileNameOf(relativePath: string): string {
    const idx = relativePath.lastIndexOf("/");
    return idx === -1 ? relativePath : relativePath.slice(idx + 1);
}

/** Download name for a converted image: <stem>.dcm */
export function downloadNameOf(relativePath: string): string {
    const name = fileNameOf(relativePath);
    const dot = name.lastIndexOf(".");
    const stem = dot > 0 ? name.slice(0, dot) : name;
    return `${stem}.dcm`;
}
