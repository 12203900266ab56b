/** UI state machine for the 2AFC listening test.
 *
 * Deliberately DOM-free: the page hands in a Transport (network) and an
 * AudioSink (playback) and subscribes to state changes. All scoring shown
 * to the listener comes verbatim from the service; nothing is computed
 * here.
 */

import type {
  ResponseBody,
  SessionRequest,
  Transport,
  TrialOutcome,
} from "./api.js";

export type Phase = "loading" | "listening" | "awaiting-choice" | "finished";

export interface UiState {
  session_id: string | null;
  trial_index: number;
  total_trials: number;
  options: [string, string] | null;
  phase: Phase;
  result: { score_pct: number; category: string } | null;
  /** message of the last failed network step; retry() re-runs that step */
  error: string | null;
  /** replays used on the current trial, sent with the response */
  replays: number;
  /** false when a replay fetch returned different bytes than the first */
  replay_cache_ok: boolean;
}

/** Plays one stimulus; the promise resolves when playback has finished. */
export interface AudioSink {
  play(bytes: ArrayBuffer): Promise<void>;
}

export interface Clock {
  now(): number;
}

export function trialCounter(state: UiState): string {
  return `${state.trial_index + 1} of ${state.total_trials}`;
}

function sameBytes(a: ArrayBuffer, b: ArrayBuffer): boolean {
  if (a.byteLength !== b.byteLength) return false;
  const va = new Uint8Array(a);
  const vb = new Uint8Array(b);
  for (let i = 0; i < va.length; i++) {
    if (va[i] !== vb[i]) return false;
  }
  return true;
}

function message(e: unknown): string {
  return e instanceof Error ? e.message : String(e);
}

const INITIAL: UiState = {
  session_id: null,
  trial_index: 0,
  total_trials: 0,
  options: null,
  phase: "loading",
  result: null,
  error: null,
  replays: 0,
  replay_cache_ok: true,
};

export class App {
  private st: UiState = { ...INITIAL };
  private listeners = new Set<(s: Readonly<UiState>) => void>();
  private epoch = 0;
  private pending: (() => Promise<void>) | null = null;
  private audioCache: ArrayBuffer | null = null;
  private choiceEnabledAt = 0;

  constructor(
    private readonly transport: Transport,
    private readonly audio: AudioSink,
    private readonly clock: Clock = Date,
  ) {}

  get state(): Readonly<UiState> {
    return this.st;
  }

  subscribe(fn: (s: Readonly<UiState>) => void): () => void {
    this.listeners.add(fn);
    fn(this.st);
    return () => this.listeners.delete(fn);
  }

  private patch(partial: Partial<UiState>): void {
    this.st = { ...this.st, ...partial };
    for (const fn of this.listeners) fn(this.st);
  }

  /** Invalidate every in-flight continuation and start a new one. */
  private bump(): number {
    return ++this.epoch;
  }

  private fresh(epoch: number): boolean {
    return epoch === this.epoch;
  }

  private fail(epoch: number, e: unknown, redo: () => Promise<void>): void {
    if (!this.fresh(epoch)) return;
    this.pending = redo;
    this.patch({ error: message(e) });
  }

  async start(nItems: number, opts: Omit<SessionRequest, "n_items"> = {}) {
    const epoch = this.bump();
    this.st = { ...INITIAL };
    this.patch({});
    try {
      const session = await this.transport.createSession({
        n_items: nItems,
        ...opts,
      });
      if (!this.fresh(epoch)) return;
      this.patch({
        session_id: session.session_id,
        total_trials: session.n_items,
      });
      await this.loadTrial(session.session_id, 0, epoch);
    } catch (e) {
      this.fail(epoch, e, () => this.start(nItems, opts));
    }
  }

  private async loadTrial(sessionId: string, index: number, epoch: number) {
    this.patch({
      phase: "loading",
      trial_index: index,
      options: null,
      error: null,
      replays: 0,
      replay_cache_ok: true,
    });
    try {
      const trial = await this.transport.getTrial(sessionId, index);
      if (!this.fresh(epoch)) return;
      const bytes = await this.transport.getAudio(sessionId, index);
      if (!this.fresh(epoch)) return;
      this.audioCache = bytes;
      this.patch({
        options: [trial.option_a, trial.option_b],
        phase: "listening",
      });
      await this.audio.play(bytes);
      if (!this.fresh(epoch)) return;
      this.choiceEnabledAt = this.clock.now();
      this.patch({ phase: "awaiting-choice" });
    } catch (e) {
      this.fail(epoch, e, () => this.loadTrial(sessionId, index, this.bump()));
    }
  }

  /** Record a choice. Ignored until playback has completed at least once. */
  async choose(word: string): Promise<void> {
    const { phase, options, session_id, replays } = this.st;
    if (phase !== "awaiting-choice" || !options || !session_id) return;
    if (word !== options[0] && word !== options[1]) return;
    const latency = Math.max(0, Math.round(this.clock.now() - this.choiceEnabledAt));
    await this.submit(session_id, this.st.trial_index, {
      chosen: word,
      latency_ms: latency,
      replays,
    });
  }

  private async submit(sessionId: string, trial: number, body: ResponseBody) {
    const epoch = this.bump();
    this.patch({ phase: "loading", error: null });
    try {
      const outcome: TrialOutcome = await this.transport.postResponse(
        sessionId,
        trial,
        body,
      );
      if (!this.fresh(epoch)) return;
      if ("result" in outcome) {
        this.patch({
          phase: "finished",
          result: {
            score_pct: outcome.result.score_pct,
            category: outcome.result.category,
          },
        });
      } else {
        await this.loadTrial(sessionId, outcome.next_trial, epoch);
      }
    } catch (e) {
      this.fail(epoch, e, () => this.submit(sessionId, trial, body));
    }
  }

  /** Play the current stimulus again; the count rides along with the
   * response. The service must return identical bytes, so the re-request
   * is checked against the first fetch and a mismatch is surfaced rather
   * than played. */
  async replay(): Promise<void> {
    const { phase, session_id } = this.st;
    if (phase !== "awaiting-choice" || !session_id) return;
    const epoch = this.bump();
    const cached = this.audioCache;
    this.patch({ error: null });
    try {
      const bytes = await this.transport.getAudio(
        session_id,
        this.st.trial_index,
      );
      if (!this.fresh(epoch)) return;
      if (cached && !sameBytes(bytes, cached)) {
        this.patch({ replay_cache_ok: false, error: "stimulus changed between plays" });
        return;
      }
      this.patch({ replays: this.st.replays + 1 });
      await this.audio.play(bytes);
    } catch (e) {
      this.fail(epoch, e, () => this.replay());
    }
  }

  /** Re-run the network step that produced state.error. */
  async retry(): Promise<void> {
    const redo = this.pending;
    if (!this.st.error || !redo) return;
    this.pending = null;
    this.patch({ error: null });
    await redo();
  }

  /** Left/right arrows mirror the two choice buttons. */
  handleKey(key: string): void {
    if (this.st.phase !== "awaiting-choice" || !this.st.options) return;
    if (key === "ArrowLeft") void this.choose(this.st.options[0]);
    else if (key === "ArrowRight") void this.choose(this.st.options[1]);
  }
}
