/**
 * Typed client for the annotation service. All state flows through the
 * HTTP API; the fetch implementation is injectable for tests.
 */

import { FuzzyMask, maskToPgm, pgmToMask, StrokeRecord } from "./mask.js";

export interface ImageRecord {
    id: string;
    path: string;
    format: string;
    width: number;
    height: number;
    metadata: Record<string, string>;
    annotation_status: string;
}

export interface InstanceBox {
    bbox: [number, number, number, number];
    instance_confidence: number | null;
}

export interface InstancesRecord {
    image_id: string;
    instances: InstanceBox[];
    annotator: string | null;
    timestamp: string | null;
    strokes?: StrokeRecord[];
}

export interface ReviewEntry {
    id: string;
    detection_ref: string;
    reason: string;
    status: "pending" | "confirmed" | "rejected";
    image_id: string | null;
    frames: number[];
    positions: number[];
    annotation_stub?: Record<string, unknown>;
}

export interface ClaheParams {
    tiles_x?: number;
    tiles_y?: number;
    clip_limit?: number;
    bins?: number;
}

export class ApiError extends Error {
    constructor(
        readonly status: number,
        readonly kind: string,
        message: string,
    ) {
        super(message);
    }
}

type Fetch = typeof fetch;

/** Uint8Array views are not assignable to BodyInit under TS DOM typings;
 * copy out the exact byte range as a plain ArrayBuffer. */
function toArrayBuffer(bytes: Uint8Array): ArrayBuffer {
    return bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer;
}

async function raiseForStatus(response: Response): Promise<Response> {
    if (response.ok || response.status === 204) return response;
    let kind = "error";
    let message = `HTTP ${response.status}`;
    try {
        const body = (await response.json()) as { error?: string; message?: string };
        kind = body.error ?? kind;
        message = body.message ?? message;
    } catch {
        // non-JSON error body: keep the defaults
    }
    throw new ApiError(response.status, kind, message);
}

export class AnnotationApi {
    constructor(
        readonly baseUrl: string,
        private readonly fetchImpl: Fetch = fetch,
    ) {}

    private async request(path: string, init?: RequestInit): Promise<Response> {
        const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
        return raiseForStatus(response);
    }

    async health(): Promise<{ status: string; version: string }> {
        return (await this.request("/health")).json();
    }

    async listImages(): Promise<ImageRecord[]> {
        const body = (await (await this.request("/images")).json()) as { images: ImageRecord[] };
        return body.images;
    }

    async imageBlob(imageId: string): Promise<Blob> {
        return (await this.request(`/images/${imageId}`)).blob();
    }

    /** null means the image has no annotation yet (a state, not an error). */
    async getMask(imageId: string): Promise<FuzzyMask | null> {
        const response = await this.request(`/images/${imageId}/mask`);
        if (response.status === 204) return null;
        return pgmToMask(new Uint8Array(await response.arrayBuffer()));
    }

    async putMask(imageId: string, mask: FuzzyMask): Promise<void> {
        await this.request(`/images/${imageId}/mask`, {
            method: "PUT",
            headers: { "content-type": "image/x-portable-graymap" },
            body: toArrayBuffer(maskToPgm(mask)),
        });
    }

    async getInstances(imageId: string): Promise<InstancesRecord> {
        return (await this.request(`/images/${imageId}/instances`)).json();
    }

    async putInstances(imageId: string, record: Omit<InstancesRecord, "image_id" | "timestamp">): Promise<void> {
        await this.request(`/images/${imageId}/instances`, {
            method: "PUT",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(record),
        });
    }

    async clahePreview(imageId: string, params: ClaheParams = {}): Promise<Blob> {
        const response = await this.request("/enhance/clahe", {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ id: imageId, params }),
        });
        return response.blob();
    }

    async reviewQueue(status?: string): Promise<ReviewEntry[]> {
        const query = status ? `?status=${encodeURIComponent(status)}` : "";
        const body = (await (await this.request(`/review-queue${query}`)).json()) as {
            entries: ReviewEntry[];
        };
        return body.entries;
    }

    async postReview(entryId: string, decision: "confirmed" | "rejected", reviewer?: string): Promise<ReviewEntry> {
        const response = await this.request(`/review-queue/${entryId}`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ decision, reviewer: reviewer ?? null }),
        });
        return response.json();
    }
}
