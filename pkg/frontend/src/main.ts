/**
 * DOM wiring for the annotation/review tool. All pipeline semantics live
 * in mask.ts / annotator.ts / review.ts; this file only binds them to a
 * canvas and a toolbar.
 */

import { AnnotationApi, ImageRecord } from "./api.js";
import { AnnotationSession, BrushState, DEFAULT_BRUSH } from "./annotator.js";
import { Falloff, quantize } from "./mask.js";
import { ReviewController } from "./review.js";
import {
    initialView,
    panBy,
    screenToImage,
    toggleClahe,
    ViewState,
    withOpacity,
    zoomAt,
} from "./view.js";

const api = new AnnotationApi("");
const reviewCtl = new ReviewController(api, "annotator");

let images: ImageRecord[] = [];
let session: AnnotationSession | null = null;
let view: ViewState = initialView();
let brush: BrushState = { ...DEFAULT_BRUSH };
let baseBitmap: ImageBitmap | null = null;
let plainBitmap: ImageBitmap | null = null;
let strokePoints: [number, number][] = [];
let drawing = false;

const $ = <T extends HTMLElement>(id: string): T => {
    const el = document.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
};

const canvas = $<HTMLCanvasElement>("editor");
const ctx = canvas.getContext("2d")!;
const overlay = document.createElement("canvas");
const overlayCtx = overlay.getContext("2d")!;
const statusLine = $<HTMLSpanElement>("status");

function setStatus(text: string): void {
    statusLine.textContent = text;
}

function render(): void {
    ctx.save();
    ctx.fillStyle = "#222";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (baseBitmap && session) {
        ctx.imageSmoothingEnabled = view.zoom < 1;
        ctx.setTransform(view.zoom, 0, 0, view.zoom, -view.panX * view.zoom, -view.panY * view.zoom);
        ctx.drawImage(baseBitmap, 0, 0);
        paintOverlay();
        ctx.globalAlpha = view.overlayOpacity;
        ctx.drawImage(overlay, 0, 0);
        ctx.globalAlpha = 1;
    }
    ctx.restore();
}

function paintOverlay(): void {
    if (!session) return;
    overlay.width = session.width;
    overlay.height = session.height;
    const levels = quantize(session.currentMask);
    const img = overlayCtx.createImageData(session.width, session.height);
    for (let i = 0; i < levels.length; i++) {
        img.data[i * 4] = 46;
        img.data[i * 4 + 1] = 204;
        img.data[i * 4 + 2] = 113;
        img.data[i * 4 + 3] = levels[i];
    }
    overlayCtx.putImageData(img, 0, 0);
}

async function refreshBitmap(): Promise<void> {
    if (!session) return;
    const blob = view.claheEnabled
        ? await api.clahePreview(session.imageId, view.claheParams)
        : await api.imageBlob(session.imageId);
    const bitmap = await createImageBitmap(blob);
    if (!view.claheEnabled) plainBitmap = bitmap;
    baseBitmap = bitmap;
    render();
}

async function openImage(record: ImageRecord): Promise<void> {
    session = await AnnotationSession.load(api, record.id, record.width, record.height);
    view = initialView();
    plainBitmap = null;
    await refreshBitmap();
    setStatus(`editing ${record.id} (${record.width}x${record.height}), ${session.strokeLog.length} strokes`);
}

async function refreshImageList(): Promise<void> {
    images = await api.listImages();
    const list = $<HTMLUListElement>("image-list");
    list.replaceChildren();
    for (const rec of images) {
        const item = document.createElement("li");
        const button = document.createElement("button");
        button.textContent = `${rec.id} [${rec.annotation_status}]`;
        button.addEventListener("click", () => void openImage(rec));
        item.appendChild(button);
        list.appendChild(item);
    }
}

async function refreshReviewPanel(): Promise<void> {
    const entries = await reviewCtl.pending();
    const list = $<HTMLUListElement>("review-list");
    list.replaceChildren();
    $<HTMLSpanElement>("review-count").textContent = String(entries.length);
    for (const entry of entries) {
        const item = document.createElement("li");
        const label = document.createElement("span");
        label.textContent = `${entry.detection_ref} (${entry.reason}) @ ${entry.positions
            .map((p) => p.toFixed(2))
            .join(", ")} m`;
        item.appendChild(label);
        for (const decision of ["confirmed", "rejected"] as const) {
            const button = document.createElement("button");
            button.textContent = decision === "confirmed" ? "confirm" : "reject";
            button.addEventListener("click", () => {
                void reviewCtl
                    .decide(entry.id, decision)
                    .then((result) => {
                        setStatus(
                            result.reconciled
                                ? `${entry.id} already ${decision} (reconciled)`
                                : `${entry.id} ${decision}`,
                        );
                        return refreshReviewPanel();
                    })
                    .catch((err: unknown) => setStatus(`review failed: ${String(err)}`));
            });
            item.appendChild(button);
        }
        list.appendChild(item);
    }
}

function pointerImagePoint(ev: PointerEvent): [number, number] | null {
    if (!session) return null;
    const rect = canvas.getBoundingClientRect();
    const [ix, iy] = screenToImage(view, ev.clientX - rect.left, ev.clientY - rect.top);
    if (ix < 0 || iy < 0 || ix > session.width - 1 || iy > session.height - 1) return null;
    return [ix, iy];
}

canvas.addEventListener("pointerdown", (ev) => {
    if (ev.button === 1 || ev.shiftKey) return; // pan gesture
    const pt = pointerImagePoint(ev);
    if (!pt) return;
    drawing = true;
    strokePoints = [pt];
});

canvas.addEventListener("pointermove", (ev) => {
    if (ev.buttons === 4 || (ev.buttons === 1 && ev.shiftKey)) {
        view = panBy(view, ev.movementX, ev.movementY);
        render();
        return;
    }
    if (!drawing) return;
    const pt = pointerImagePoint(ev);
    if (pt) strokePoints.push(pt);
});

canvas.addEventListener("pointerup", () => {
    if (!drawing || !session || strokePoints.length === 0) {
        drawing = false;
        return;
    }
    drawing = false;
    session.applyStroke({
        path: strokePoints,
        radius: brush.radius,
        intensity: brush.intensity,
        falloff: brush.falloff,
        erase: brush.eraser,
    });
    strokePoints = [];
    render();
    setStatus(`${session.strokeLog.length} strokes (${session.state})`);
});

canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    const rect = canvas.getBoundingClientRect();
    view = zoomAt(view, ev.deltaY < 0 ? 1.2 : 1 / 1.2, ev.clientX - rect.left, ev.clientY - rect.top);
    render();
});

function bindControls(): void {
    $<HTMLInputElement>("brush-radius").addEventListener("input", (ev) => {
        brush.radius = Number((ev.target as HTMLInputElement).value);
    });
    $<HTMLInputElement>("brush-intensity").addEventListener("input", (ev) => {
        brush.intensity = Number((ev.target as HTMLInputElement).value);
    });
    $<HTMLSelectElement>("brush-falloff").addEventListener("change", (ev) => {
        brush.falloff = (ev.target as HTMLSelectElement).value as Falloff;
    });
    $<HTMLInputElement>("brush-eraser").addEventListener("change", (ev) => {
        brush.eraser = (ev.target as HTMLInputElement).checked;
    });
    $<HTMLInputElement>("overlay-opacity").addEventListener("input", (ev) => {
        view = withOpacity(view, Number((ev.target as HTMLInputElement).value));
        render();
    });
    $<HTMLInputElement>("clahe-toggle").addEventListener("change", () => {
        view = toggleClahe(view);
        if (!view.claheEnabled && plainBitmap) {
            baseBitmap = plainBitmap;
            render();
        } else {
            void refreshBitmap().catch((err: unknown) => setStatus(`enhance failed: ${String(err)}`));
        }
    });
    $<HTMLButtonElement>("undo").addEventListener("click", () => {
        if (session?.undo()) {
            render();
            setStatus(`${session.strokeLog.length} strokes (undone)`);
        }
    });
    $<HTMLButtonElement>("save").addEventListener("click", () => {
        if (!session) return;
        void session
            .save(api)
            .then(() => setStatus("saved"))
            .catch(() => setStatus("save failed: work kept locally, retry when the service is back"));
    });
}

async function start(): Promise<void> {
    bindControls();
    try {
        await api.health();
    } catch {
        setStatus("service unreachable: start it with `clearline serve --root <dir>`");
        return;
    }
    await refreshImageList();
    await refreshReviewPanel();
    setStatus("pick an image to annotate");
}

void start();
