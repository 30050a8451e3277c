/**
 * Review-queue triage with exactly-once decisions.
 *
 * Decisions are terminal on the server (re-deciding returns a conflict),
 * so a retry after a lost response must reconcile: if the entry's
 * recorded status equals what we tried to apply, the decision landed and
 * the retry reports success; a different status is a genuine conflict.
 */

import { AnnotationApi, ApiError, ReviewEntry } from "./api.js";

export type Decision = "confirmed" | "rejected";

export interface DecisionResult {
    entry: ReviewEntry;
    /** true when a retry found the decision already applied server-side */
    reconciled: boolean;
}

export class ReviewConflict extends Error {
    constructor(
        readonly entryId: string,
        readonly existingStatus: string,
    ) {
        super(`entry ${entryId} already decided: ${existingStatus}`);
    }
}

export class ReviewController {
    constructor(
        private readonly api: AnnotationApi,
        private readonly reviewer?: string,
        private readonly maxAttempts = 3,
    ) {}

    async pending(): Promise<ReviewEntry[]> {
        return this.api.reviewQueue("pending");
    }

    async decide(entryId: string, decision: Decision): Promise<DecisionResult> {
        let lastError: unknown;
        for (let attempt = 0; attempt < this.maxAttempts; attempt++) {
            try {
                const entry = await this.api.postReview(entryId, decision, this.reviewer);
                return { entry, reconciled: false };
            } catch (err) {
                if (err instanceof ApiError && err.status === 409) {
                    return this.reconcile(entryId, decision);
                }
                if (err instanceof ApiError) throw err; // 4xx/5xx other than conflict
                lastError = err; // network failure: the POST may or may not have landed
            }
        }
        throw lastError instanceof Error ? lastError : new Error(String(lastError));
    }

    private async reconcile(entryId: string, decision: Decision): Promise<DecisionResult> {
        const entries = await this.api.reviewQueue();
        const entry = entries.find((e) => e.id === entryId);
        if (entry && entry.status === decision) {
            return { entry, reconciled: true };
        }
        throw new ReviewConflict(entryId, entry?.status ?? "unknown");
    }
}
