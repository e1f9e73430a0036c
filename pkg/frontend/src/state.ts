// Session state machine, DOM-free so it can be tested headlessly.
//
// Invariants enforced here:
//  - at most one rating request in flight;
//  - a rating can only be submitted after the current image has rendered;
//  - predictions are requested only after a successful submission;
//  - a failed submission (network or 4xx) never drops the current
//    composition or the entered value.

import { ApiClient, HttpError, NextComposition, SessionMode } from './api.js';

export interface SessionView {
    onComposition(next: NextComposition): void;
    onError(message: string): void;
    onRetryable(message: string): void;
    onPrediction(label: string, scores: Record<string, number>): void;
    onProgress(initialDone: number, rerateDone: number): void;
    onDone(message: string): void;
}

export class Session {
    mode: SessionMode = 'initial';
    current: NextComposition | null = null;
    imageSeen = false;
    submitting = false;
    pendingValue: number | null = null;   // survives a failed submit for retry
    initialDone = 0;
    rerateDone = 0;
    finished = false;

    constructor(
        private client: ApiClient,
        public raterId: string,
        private view: SessionView,
    ) {}

    async start(mode: SessionMode = 'initial'): Promise<void> {
        this.mode = mode;
        await this.loadNext();
    }

    markImageSeen(): void {
        this.imageSeen = true;
    }

    async loadNext(): Promise<void> {
        this.current = null;
        this.imageSeen = false;
        this.pendingValue = null;
        try {
            const next = this.mode === 'rerate'
                ? await this.client.nextRerate(this.raterId)
                : await this.client.nextInitial(this.raterId);
            this.current = next;
            this.view.onComposition(next);
        } catch (err) {
            if (err instanceof HttpError && err.status === 404) {
                this.finished = true;
                this.view.onDone(err.detail);
                return;
            }
            this.view.onRetryable(`could not fetch the next composition: ${message(err)}`);
        }
    }

    /** Submit a rating for the composition currently on screen. */
    async submit(value: number): Promise<boolean> {
        if (this.current === null || this.submitting) return false;
        if (!this.imageSeen) {
            this.view.onError('the composition has not rendered yet');
            return false;
        }
        const target = this.current;
        this.submitting = true;
        this.pendingValue = value;
        try {
            await this.client.postRating({
                composition_id: target.id,
                rating: value,
                round: target.round,
                rater_id: this.raterId,
            });
        } catch (err) {
            if (err instanceof HttpError) {
                // validation or conflict: state (composition, value) stays put
                this.view.onError(err.detail);
            } else {
                this.view.onRetryable(`rating not saved: ${message(err)}`);
            }
            return false;
        } finally {
            this.submitting = false;
        }
        this.pendingValue = null;
        if (target.round === 0) this.initialDone += 1;
        else this.rerateDone += 1;
        this.view.onProgress(this.initialDone, this.rerateDone);
        await this.showPrediction(target.id);
        await this.loadNext();
        return true;
    }

    /** Re-send the last value after a network failure; input is never dropped. */
    async retry(): Promise<boolean> {
        if (this.pendingValue === null) {
            await this.loadNext();
            return this.current !== null;
        }
        return this.submit(this.pendingValue);
    }

    private async showPrediction(id: string): Promise<void> {
        try {
            const prediction = await this.client.predict(id);
            if (prediction !== null) {
                this.view.onPrediction(prediction.label, prediction.scores);
            }
        } catch {
            // prediction display is best-effort; never blocks the rating loop
        }
    }
}

function message(err: unknown): string {
    return err instanceof Error ? err.message : String(err);
}
