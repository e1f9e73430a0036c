// Scripted browser session against a real rating server:
// rate 20 compositions, re-rate 5, verify the server recorded 25 rounds
// correctly, and check that an out-of-range rating bounces with 400
// without losing UI state.
import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it, vi } from 'vitest';

import { createClient } from '../src/api.js';
import { mountApp } from '../src/app.js';

const PORT = 21000 + Math.floor(Math.random() * 10000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let workDir: string;

async function serverReady(): Promise<void> {
    for (let attempt = 0; attempt < 100; attempt++) {
        try {
            const res = await fetch(`${BASE}/api/stats`);
            if (res.ok) return;
        } catch {
            // not up yet
        }
        await new Promise((resolve) => setTimeout(resolve, 200));
    }
    throw new Error('rating server did not come up');
}

beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), 'harmonylab-ui-'));
    const cfgPath = join(workDir, 'config.json');
    writeFileSync(cfgPath, JSON.stringify({
        generation: {
            resolution: 64,
            counts: { circle: { black: [1, 2] }, rectangle: { white: [0, 1] } },
        },
    }));
    const dataDir = join(workDir, 'data');
    execFileSync('python3', ['-m', 'harmonylab.cli', '--config', cfgPath,
        '--seed', '3', 'generate', '--count', '20', '--out', dataDir]);
    server = spawn('python3', ['-c',
        `from harmonylab.service import serve; serve(${PORT}, ` +
        `${JSON.stringify(dataDir)}, subset_size=5, rounds_target=2)`],
        { stdio: 'ignore' });
    await serverReady();
}, 60_000);

afterAll(() => {
    server?.kill();
});

function mountDom(): void {
    const html = readFileSync(join(__dirname, '..', 'index.html'), 'utf8');
    const body = html.slice(html.indexOf('<body>') + 6, html.indexOf('</body>'))
        .replace(/<script[\s\S]*?<\/script>/, '');
    document.body.innerHTML = body;
}

describe('scripted rating session', () => {
    it('rates 20, re-rates 5, server stats agree, 400 keeps state', async () => {
        mountDom();
        const handles = mountApp(document, undefined, BASE);
        const session = handles.session;
        const img = document.getElementById('composition') as HTMLImageElement;

        await session.start('initial');
        expect(session.current).not.toBeNull();
        expect(session.current!.round).toBe(0);

        // out-of-range rating: server must answer 400 and the composition
        // under rating must survive untouched
        img.dispatchEvent(new Event('load'));
        const firstId = session.current!.id;
        const rejected = await session.submit(7);
        expect(rejected).toBe(false);
        expect(session.current!.id).toBe(firstId);
        expect((document.getElementById('error') as HTMLElement).textContent)
            .toMatch(/rating must be/);

        // first rating through the keyboard path
        document.dispatchEvent(new KeyboardEvent('keydown', { key: '3' }));
        await vi.waitFor(() => {
            expect(session.initialDone).toBe(1);
        }, { timeout: 5000 });

        // remaining 19 initial ratings
        for (let i = 1; i < 20; i++) {
            expect(session.current).not.toBeNull();
            expect(session.current!.round).toBe(0);
            img.dispatchEvent(new Event('load'));
            const ok = await session.submit((i % 5) + 1);
            expect(ok).toBe(true);
        }
        expect(session.initialDone).toBe(20);

        // switch to re-rate mode through the UI control
        const modeSelect = document.getElementById('mode') as HTMLSelectElement;
        modeSelect.value = 'rerate';
        modeSelect.dispatchEvent(new Event('change'));
        await vi.waitFor(() => {
            expect(session.current).not.toBeNull();
            expect(session.current!.round).toBe(1);
        }, { timeout: 5000 });

        const reratedIds = new Set<string>();
        for (let i = 0; i < 5; i++) {
            expect(session.current!.round).toBe(1);
            reratedIds.add(session.current!.id);
            img.dispatchEvent(new Event('load'));
            const ok = await session.submit(((i + 2) % 5) + 1);
            expect(ok).toBe(true);
            if (session.finished) break;
        }
        expect(session.rerateDone).toBe(5);
        expect(reratedIds.size).toBe(5);
        expect(session.finished).toBe(true);  // queue of 5 exhausted

        // the server agrees: 25 records, 20 in round 0, 5 in round 1
        const client = createClient(BASE);
        const stats = await client.stats('default');
        expect(stats.total).toBe(25);
        expect(stats.by_round['0']).toBe(20);
        expect(stats.by_round['1']).toBe(5);

        await handles.refreshStats();
        expect((document.getElementById('stats') as HTMLElement).textContent)
            .toContain('25 ratings');
    }, 60_000);
});
