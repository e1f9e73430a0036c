// DOM wiring: composition display, five rating buttons, keyboard keys 1-5,
// mode toggle, stats panel, retry banner.

import { ApiClient, NextComposition, SessionMode, createClient } from './api.js';
import { Session } from './state.js';

export interface AppHandles {
    session: Session;
    refreshStats(): Promise<void>;
}

export function mountApp(root: Document, client?: ApiClient, baseUrl = ''): AppHandles {
    const api = client ?? createClient(baseUrl);
    const image = root.getElementById('composition') as HTMLImageElement;
    const status = root.getElementById('status') as HTMLElement;
    const error = root.getElementById('error') as HTMLElement;
    const retryBanner = root.getElementById('retry-banner') as HTMLElement;
    const retryButton = root.getElementById('retry') as HTMLButtonElement;
    const prediction = root.getElementById('prediction') as HTMLElement;
    const progress = root.getElementById('progress') as HTMLElement;
    const statsPanel = root.getElementById('stats') as HTMLElement;
    const raterInput = root.getElementById('rater') as HTMLInputElement;
    const modeSelect = root.getElementById('mode') as HTMLSelectElement;

    const raterId = raterInput.value || 'default';

    const session = new Session(api, raterId, {
        onComposition(next: NextComposition) {
            error.textContent = '';
            retryBanner.hidden = true;
            prediction.textContent = '';
            prediction.hidden = true;
            status.textContent = `composition ${next.id} (round ${next.round}, ${next.mode})`;
            image.src = api.resolveImage(next.image_url);
            image.hidden = false;
        },
        onError(message: string) {
            error.textContent = message;
        },
        onRetryable(message: string) {
            error.textContent = message;
            retryBanner.hidden = false;
        },
        onPrediction(label: string, scores: Record<string, number>) {
            const parts = Object.entries(scores)
                .map(([k, v]) => `${k} ${v.toFixed(2)}`)
                .join(', ');
            prediction.textContent = `model says: ${label} (${parts})`;
            prediction.hidden = false;
        },
        onProgress(initialDone: number, rerateDone: number) {
            progress.textContent = `${initialDone} rated, ${rerateDone} re-rated`;
        },
        onDone(message: string) {
            image.hidden = true;
            status.textContent = `session complete: ${message}`;
        },
    });

    image.addEventListener('load', () => session.markImageSeen());

    for (const button of Array.from(root.querySelectorAll<HTMLButtonElement>('button.rate'))) {
        button.addEventListener('click', () => {
            void session.submit(Number(button.dataset.value));
        });
    }
    root.addEventListener('keydown', (event: Event) => {
        const key = (event as KeyboardEvent).key;
        if (key >= '1' && key <= '5') {
            void session.submit(Number(key));
        }
    });
    retryButton.addEventListener('click', () => {
        void session.retry();
    });
    modeSelect.addEventListener('change', () => {
        void session.start(modeSelect.value as SessionMode);
    });

    async function refreshStats(): Promise<void> {
        try {
            const stats = await api.stats(session.raterId);
            const rounds = Object.entries(stats.by_round)
                .map(([round, count]) => `round ${round}: ${count}`)
                .join(', ');
            statsPanel.textContent =
                `${stats.total} ratings over ${stats.compositions} compositions (${rounds})`;
        } catch {
            statsPanel.textContent = 'stats unavailable';
        }
    }

    const statsButton = root.getElementById('refresh-stats') as HTMLButtonElement;
    statsButton.addEventListener('click', () => {
        void refreshStats();
    });

    return { session, refreshStats };
}

declare global {
    interface Window { __harmonylab?: AppHandles }
}

if (typeof window !== 'undefined' && typeof document !== 'undefined'
    && document.getElementById('composition') !== null) {
    const handles = mountApp(document);
    window.__harmonylab = handles;
    void handles.session.start('initial');
}
