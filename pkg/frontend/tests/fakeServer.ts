/**
 * In-memory stand-in for the annotation service, behaviour-matched to the
 * real endpoints the client uses: PGM mask bodies, 204 for unannotated,
 * 404/409 JSON errors, terminal review decisions. Supports fault
 * injection: responses can be dropped after the server applied the
 * mutation, to exercise retry reconciliation.
 */

import type { ReviewEntry } from "../src/api";

interface ImageState {
    id: string;
    width: number;
    height: number;
    mask: Uint8Array | null;
    instances: unknown | null;
}

function json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { "content-type": "application/json" },
    });
}

export class FakeServer {
    images = new Map<string, ImageState>();
    reviews = new Map<string, ReviewEntry>();
    /** when > 0, apply the mutation but fail the response (lost reply) */
    dropRepliesFor = 0;
    log: string[] = [];

    addImage(id: string, width = 24, height = 16): void {
        this.images.set(id, { id, width, height, mask: null, instances: null });
    }

    addReview(id: string, ref: string): void {
        this.reviews.set(id, {
            id,
            detection_ref: ref,
            reason: "single-frame-detection",
            status: "pending",
            image_id: null,
            frames: [4],
            positions: [12.3],
        });
    }

    fetch = async (input: string | URL | Request, init?: RequestInit): Promise<Response> => {
        const url = typeof input === "string" ? input : input instanceof URL ? input.toString() : input.url;
        const method = (init?.method ?? "GET").toUpperCase();
        const path = url.replace(/^https?:\/\/[^/]+/, "");
        this.log.push(`${method} ${path}`);
        const reply = (r: Response): Response => {
            if (this.dropRepliesFor > 0 && method !== "GET") {
                this.dropRepliesFor--;
                throw new TypeError("network connection lost");
            }
            return r;
        };

        if (path === "/health") return reply(json(200, { status: "ok", version: "test" }));

        if (path === "/images" && method === "GET") {
            return reply(
                json(200, {
                    images: [...this.images.values()].map((im) => ({
                        id: im.id,
                        path: `images/${im.id}.png`,
                        format: "png",
                        width: im.width,
                        height: im.height,
                        metadata: {},
                        annotation_status: im.mask ? "annotated" : "unannotated",
                    })),
                }),
            );
        }

        const maskMatch = path.match(/^\/images\/([^/]+)\/mask$/);
        if (maskMatch) {
            const image = this.images.get(maskMatch[1]);
            if (!image) return json(404, { error: "not-found", message: "no such image" });
            if (method === "GET") {
                if (!image.mask) return new Response(null, { status: 204 });
                return new Response(image.mask.slice(), {
                    status: 200,
                    headers: { "content-type": "image/x-portable-graymap" },
                });
            }
            if (method === "PUT") {
                const body = new Uint8Array(await new Request(url, init).arrayBuffer());
                const header = new TextDecoder().decode(body.subarray(0, 2));
                if (header !== "P5") return json(400, { error: "invalid-argument", message: "not a PGM" });
                image.mask = body;
                return reply(json(200, { status: "saved", id: image.id }));
            }
        }

        const instMatch = path.match(/^\/images\/([^/]+)\/instances$/);
        if (instMatch) {
            const image = this.images.get(instMatch[1]);
            if (!image) return json(404, { error: "not-found", message: "no such image" });
            if (method === "GET") {
                return reply(
                    json(
                        200,
                        image.instances ?? {
                            image_id: image.id,
                            instances: [],
                            annotator: null,
                            timestamp: null,
                        },
                    ),
                );
            }
            if (method === "PUT") {
                const record = JSON.parse(init?.body as string) as Record<string, unknown>;
                image.instances = { image_id: image.id, timestamp: "t0", ...record };
                return reply(json(200, { status: "saved", id: image.id }));
            }
        }

        if (path.startsWith("/review-queue")) {
            if (method === "GET") {
                const status = new URL(url, "http://x").searchParams.get("status");
                const entries = [...this.reviews.values()].filter(
                    (e) => !status || e.status === status,
                );
                return reply(json(200, { entries }));
            }
            const id = path.split("/")[2];
            const entry = this.reviews.get(id);
            if (!entry) return json(404, { error: "not-found", message: `no review entry ${id}` });
            if (entry.status !== "pending") {
                return json(409, { error: "conflict", message: `entry ${id} already decided` });
            }
            const { decision } = JSON.parse(init?.body as string) as { decision: "confirmed" | "rejected" };
            entry.status = decision; // applied before any fault: the mutation lands
            return reply(json(200, entry));
        }

        return json(404, { error: "not-found", message: `no route ${method} ${path}` });
    };
}
