// Headless state machine tests against a scripted fake client.
import { describe, expect, it } from 'vitest';

import { ApiClient, HttpError, NextComposition, Prediction, RatingPost, Stats } from '../src/api.js';
import { Session, SessionView } from '../src/state.js';

interface Recorded {
    compositions: string[];
    errors: string[];
    retryables: string[];
    predictions: string[];
    done: string[];
    progress: Array<[number, number]>;
}

function makeView(): { view: SessionView; log: Recorded } {
    const log: Recorded = {
        compositions: [], errors: [], retryables: [], predictions: [],
        done: [], progress: [],
    };
    return {
        log,
        view: {
            onComposition: (next) => log.compositions.push(next.id),
            onError: (message) => log.errors.push(message),
            onRetryable: (message) => log.retryables.push(message),
            onPrediction: (label) => log.predictions.push(label),
            onProgress: (a, b) => log.progress.push([a, b]),
            onDone: (message) => log.done.push(message),
        },
    };
}

class FakeClient implements ApiClient {
    queue: NextComposition[] = [];
    rerateQueue: NextComposition[] = [];
    posted: RatingPost[] = [];
    failPostWith: Error | null = null;
    prediction: Prediction | null = null;

    async nextInitial(): Promise<NextComposition> {
        const next = this.queue.shift();
        if (!next) throw new HttpError(404, 'nothing left to rate');
        return next;
    }
    async nextRerate(): Promise<NextComposition> {
        const next = this.rerateQueue.shift();
        if (!next) throw new HttpError(404, 're-rate queue is empty');
        return next;
    }
    async postRating(input: RatingPost): Promise<void> {
        if (this.failPostWith) throw this.failPostWith;
        this.posted.push(input);
    }
    async stats(): Promise<Stats> {
        return { total: this.posted.length, compositions: 0, by_class: {}, by_round: {}, merged: {} };
    }
    async predict(): Promise<Prediction | null> {
        return this.prediction;
    }
    resolveImage(url: string): string {
        return url;
    }
}

function comp(id: string, round = 0): NextComposition {
    return { id, round, mode: round === 0 ? 'initial' : 'rerate', image_url: `/img/${id}` };
}

describe('Session', () => {
    it('loads the first composition on start', async () => {
        const client = new FakeClient();
        client.queue = [comp('a')];
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        expect(log.compositions).toEqual(['a']);
        expect(session.current?.id).toBe('a');
    });

    it('refuses to submit before the image has rendered', async () => {
        const client = new FakeClient();
        client.queue = [comp('a')];
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        const ok = await session.submit(3);
        expect(ok).toBe(false);
        expect(client.posted).toHaveLength(0);
        expect(log.errors[0]).toMatch(/not rendered/);
    });

    it('submits after the image rendered and advances', async () => {
        const client = new FakeClient();
        client.queue = [comp('a'), comp('b')];
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        session.markImageSeen();
        const ok = await session.submit(4);
        expect(ok).toBe(true);
        expect(client.posted).toEqual([
            { composition_id: 'a', rating: 4, round: 0, rater_id: 'r1' },
        ]);
        expect(log.compositions).toEqual(['a', 'b']);
        expect(log.progress).toEqual([[1, 0]]);
    });

    it('keeps state on a 400 without losing the composition', async () => {
        const client = new FakeClient();
        client.queue = [comp('a')];
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        session.markImageSeen();
        client.failPostWith = new HttpError(400, 'rating must be an integer in 1..5');
        const ok = await session.submit(9);
        expect(ok).toBe(false);
        expect(session.current?.id).toBe('a');
        expect(log.errors).toContain('rating must be an integer in 1..5');
        // a valid retry still works against the same composition
        client.failPostWith = null;
        expect(await session.submit(2)).toBe(true);
        expect(client.posted[0].rating).toBe(2);
    });

    it('keeps state on a 409 duplicate', async () => {
        const client = new FakeClient();
        client.queue = [comp('a')];
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        session.markImageSeen();
        client.failPostWith = new HttpError(409, 'already rated');
        await session.submit(3);
        expect(session.current?.id).toBe('a');
        expect(log.errors).toContain('already rated');
    });

    it('offers retry with the kept value on network failure', async () => {
        const client = new FakeClient();
        client.queue = [comp('a'), comp('b')];
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        session.markImageSeen();
        client.failPostWith = new TypeError('fetch failed');
        await session.submit(5);
        expect(log.retryables).toHaveLength(1);
        expect(session.pendingValue).toBe(5);
        client.failPostWith = null;
        const ok = await session.retry();
        expect(ok).toBe(true);
        expect(client.posted).toEqual([
            { composition_id: 'a', rating: 5, round: 0, rater_id: 'r1' },
        ]);
    });

    it('shows the prediction only after a successful submission', async () => {
        const client = new FakeClient();
        client.queue = [comp('a'), comp('b')];
        client.prediction = { id: 'a', label: 'Good', scores: { Good: 0.9 } };
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        expect(log.predictions).toHaveLength(0);
        session.markImageSeen();
        await session.submit(5);
        expect(log.predictions).toEqual(['Good']);
    });

    it('re-rate mode pulls from the re-rate queue only', async () => {
        const client = new FakeClient();
        client.queue = [comp('x')];
        client.rerateQueue = [comp('a', 1)];
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start('rerate');
        expect(log.compositions).toEqual(['a']);
        session.markImageSeen();
        await session.submit(2);
        expect(client.posted[0]).toEqual(
            { composition_id: 'a', rating: 2, round: 1, rater_id: 'r1' });
        expect(log.progress).toEqual([[0, 1]]);
    });

    it('reports completion when the server has nothing left', async () => {
        const client = new FakeClient();
        const { view, log } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        expect(log.done).toHaveLength(1);
        expect(session.finished).toBe(true);
    });

    it('only one submission can be in flight', async () => {
        const client = new FakeClient();
        client.queue = [comp('a'), comp('b')];
        const { view } = makeView();
        const session = new Session(client, 'r1', view);
        await session.start();
        session.markImageSeen();
        const first = session.submit(3);
        const second = session.submit(4);
        expect(await Promise.all([first, second])).toEqual([true, false]);
        expect(client.posted).toHaveLength(1);
    });
});
