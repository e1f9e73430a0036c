// Typed client for the rating service HTTP API.

export type SessionMode = 'initial' | 'rerate';

export interface NextComposition {
    id: string;
    round: number;
    mode: SessionMode;
    image_url: string;
}

export interface RatingPost {
    composition_id: string;
    rating: number;
    round: number;
    rater_id: string;
}

export interface Stats {
    total: number;
    compositions: number;
    by_class: Record<string, number>;
    by_round: Record<string, number>;
    merged: Record<string, number>;
}

export interface Prediction {
    id: string;
    label: string;
    scores: Record<string, number>;
}

export class HttpError extends Error {
    constructor(public status: number, public detail: string) {
        super(`HTTP ${status}: ${detail}`);
    }
}

export interface ApiClient {
    nextInitial(rater: string): Promise<NextComposition>;
    nextRerate(rater: string): Promise<NextComposition>;
    postRating(input: RatingPost): Promise<void>;
    stats(rater?: string): Promise<Stats>;
    predict(id: string): Promise<Prediction | null>;
    resolveImage(url: string): string;
}

async function parseError(res: Response): Promise<HttpError> {
    let detail = res.statusText;
    try {
        const body = await res.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
    } catch {
        // keep the status text
    }
    return new HttpError(res.status, detail);
}

export function createClient(baseUrl = ''): ApiClient {
    const base = baseUrl.replace(/\/$/, '');

    async function getJson<T>(path: string): Promise<T> {
        const res = await fetch(base + path);
        if (!res.ok) throw await parseError(res);
        return res.json() as Promise<T>;
    }

    return {
        nextInitial(rater: string) {
            return getJson<NextComposition>(`/api/session/next?rater=${encodeURIComponent(rater)}`);
        },
        nextRerate(rater: string) {
            return getJson<NextComposition>(`/api/rerate/next?rater=${encodeURIComponent(rater)}`);
        },
        async postRating(input: RatingPost): Promise<void> {
            const res = await fetch(base + '/api/ratings', {
                method: 'POST',
                headers: { 'Content-Type': 'application/json' },
                body: JSON.stringify(input),
            });
            if (!res.ok) throw await parseError(res);
        },
        stats(rater?: string) {
            const query = rater ? `?rater=${encodeURIComponent(rater)}` : '';
            return getJson<Stats>(`/api/stats${query}`);
        },
        async predict(id: string): Promise<Prediction | null> {
            const res = await fetch(base + `/api/predict/${encodeURIComponent(id)}`);
            if (res.status === 404) return null;     // no model loaded
            if (!res.ok) throw await parseError(res);
            return res.json() as Promise<Prediction>;
        },
        resolveImage(url: string) {
            return base + url;
        },
    };
}
