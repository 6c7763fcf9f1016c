/**
 * Session state machine, independent of the DOM.
 *
 * Enforces the viewing gate client-side (choice controls stay locked for
 * min_view_ms after a question renders), recovers from a server 422 by
 * re-locking for the remaining time, skips already-answered questions on
 * 409, and keeps a pending choice alive across network failures so nothing
 * is lost on a flaky connection.
 */

import type { QuestionPayload, Transport } from "./api.js";

export type Side = "left" | "right";

export interface FlowEvents {
  question(q: QuestionPayload): void;
  locked(remainingMs: number): void;
  unlocked(): void;
  progress(answered: number, total: number): void;
  notice(text: string): void;
  retryBanner(visible: boolean): void;
  done(answered: number, total: number): void;
  fatal(text: string): void;
}

export interface Timers {
  now(): number;
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

const realTimers: Timers = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (h) => clearTimeout(h as ReturnType<typeof setTimeout>),
};

export class QuestionFlow {
  private token: string | null = null;
  private current: QuestionPayload | null = null;
  private lockedUntil = 0;
  private unlockHandle: unknown = null;
  private submitting = false;
  private pendingChoice: Side | null = null;

  constructor(
    private transport: Transport,
    private events: FlowEvents,
    private timers: Timers = realTimers,
  ) {}

  get isLocked(): boolean {
    return this.timers.now() < this.lockedUntil;
  }

  get currentQuestion(): QuestionPayload | null {
    return this.current;
  }

  get sessionToken(): string | null {
    return this.token;
  }

  /** Open a session (or adopt a stored token) and load the first question. */
  async start(subjectId: string, existingToken?: string): Promise<void> {
    try {
      if (existingToken) {
        this.token = existingToken;
      } else {
        const session = await this.transport.openSession(subjectId);
        this.token = session.token;
      }
      await this.loadNext();
    } catch (err) {
      this.events.fatal(String(err));
    }
  }

  private async loadNext(): Promise<void> {
    if (this.token === null) return;
    const q = await this.transport.nextQuestion(this.token);
    if (q.done) {
      this.current = null;
      this.events.progress(q.answered, q.total);
      this.events.done(q.answered, q.total);
      return;
    }
    this.current = q;
    this.events.question(q);
    this.events.progress(q.answered, q.total);
    this.lockFor(q.min_view_ms ?? 5000);
  }

  private lockFor(ms: number): void {
    if (this.unlockHandle !== null) this.timers.clearTimeout(this.unlockHandle);
    this.lockedUntil = this.timers.now() + ms;
    this.events.locked(ms);
    this.unlockHandle = this.timers.setTimeout(() => {
      this.unlockHandle = null;
      this.events.unlocked();
    }, ms);
  }

  /**
   * Handle a choice. Locked clicks are ignored entirely (nothing is sent);
   * a pending choice left over from a network failure is replayed by retry().
   */
  async choose(side: Side): Promise<void> {
    if (this.current === null || this.token === null) return;
    if (this.isLocked || this.submitting) return;
    this.submitting = true;
    this.pendingChoice = side;
    const questionId = this.current.question_id!;
    try {
      const result = await this.transport.submitAnswer(this.token, questionId, side);
      this.submitting = false;
      if (result.kind === "ok") {
        this.pendingChoice = null;
        this.events.retryBanner(false);
        this.events.progress(result.answered, result.total);
        await this.loadNext();
      } else if (result.kind === "too_early") {
        // server clock is authoritative: stay locked for the remaining time
        this.pendingChoice = null;
        this.lockFor(Math.max(result.retryAfterMs, 1));
      } else if (result.kind === "duplicate") {
        this.pendingChoice = null;
        this.events.notice(`question ${questionId} was already answered; skipping`);
        await this.loadNext();
      } else {
        this.events.fatal(`submission failed: HTTP ${result.status}`);
      }
    } catch {
      // network failure: keep the choice, offer a retry
      this.submitting = false;
      this.events.retryBanner(true);
    }
  }

  /** Re-send the choice that failed on the network. */
  async retry(): Promise<void> {
    const side = this.pendingChoice;
    if (side === null) return;
    this.pendingChoice = null;
    this.events.retryBanner(false);
    await this.choose(side);
  }

  get hasPendingChoice(): boolean {
    return this.pendingChoice !== null;
  }
}
