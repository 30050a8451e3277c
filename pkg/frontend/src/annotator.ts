/**
 * One editing session per image: a stroke log composited client-side,
 * instance boxes, undo, and save-with-retry. The stroke log is the
 * source of truth (the raster is derived), so undo is a replay and the
 * log is persisted alongside the mask for later replay verification.
 */

import { AnnotationApi, InstanceBox } from "./api.js";
import { eraseStroke, Falloff, FuzzyMask, replayStrokes, sprayStroke, StrokeRecord } from "./mask.js";

export interface BrushState {
    radius: number;
    intensity: number;
    falloff: Falloff;
    eraser: boolean;
}

export const DEFAULT_BRUSH: BrushState = {
    radius: 12,
    intensity: 0.8,
    falloff: "gaussian",
    eraser: false,
};

export type SaveState = "clean" | "dirty" | "saving" | "unsaved-warning";

export class AnnotationSession {
    readonly imageId: string;
    readonly width: number;
    readonly height: number;
    annotator: string | null;
    private strokes: StrokeRecord[] = [];
    private instances: InstanceBox[] = [];
    private mask: FuzzyMask;
    private saveState: SaveState = "clean";

    constructor(imageId: string, width: number, height: number, annotator: string | null = null) {
        this.imageId = imageId;
        this.width = width;
        this.height = height;
        this.annotator = annotator;
        this.mask = new FuzzyMask(width, height);
    }

    /** Resume a session from a previously saved stroke log. */
    static async load(api: AnnotationApi, imageId: string, width: number, height: number): Promise<AnnotationSession> {
        const session = new AnnotationSession(imageId, width, height);
        const record = await api.getInstances(imageId);
        if (record.strokes) {
            for (const s of record.strokes) session.applyStroke(s);
            session.saveState = "clean";
        }
        session.instances = record.instances ?? [];
        session.annotator = record.annotator;
        return session;
    }

    get currentMask(): FuzzyMask {
        return this.mask;
    }

    get strokeLog(): readonly StrokeRecord[] {
        return this.strokes;
    }

    get instanceBoxes(): readonly InstanceBox[] {
        return this.instances;
    }

    get state(): SaveState {
        return this.saveState;
    }

    applyStroke(stroke: StrokeRecord): void {
        this.mask = stroke.erase
            ? eraseStroke(this.mask, stroke.path, stroke.radius, stroke.intensity, stroke.falloff)
            : sprayStroke(this.mask, stroke.path, stroke.radius, stroke.intensity, stroke.falloff);
        this.strokes.push(stroke);
        this.saveState = "dirty";
    }

    undo(): boolean {
        if (this.strokes.length === 0) return false;
        this.strokes.pop();
        this.mask = replayStrokes(this.width, this.height, this.strokes);
        this.saveState = "dirty";
        return true;
    }

    clearStrokes(): void {
        this.strokes = [];
        this.mask = new FuzzyMask(this.width, this.height);
        this.saveState = "dirty";
    }

    addInstance(box: InstanceBox): void {
        this.instances.push(box);
        this.saveState = "dirty";
    }

    /**
     * Persist mask + instance record (with the stroke log). On failure the
     * session keeps its dirty state so nothing is lost across a retry.
     */
    async save(api: AnnotationApi): Promise<void> {
        this.saveState = "saving";
        try {
            await api.putMask(this.imageId, this.mask);
            await api.putInstances(this.imageId, {
                instances: this.instances,
                annotator: this.annotator,
                strokes: this.strokes,
            });
            this.saveState = "clean";
        } catch (err) {
            this.saveState = "unsaved-warning";
            throw err;
        }
    }
}
