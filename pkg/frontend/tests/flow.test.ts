import { describe, expect, it } from "vitest";

import type { AnswerResult, QuestionPayload, Transport } from "../src/api.js";
import { QuestionFlow, type FlowEvents, type Side, type Timers } from "../src/flow.js";

const MIN_VIEW_MS = 5000;

/** Deterministic manual clock + timeout queue. */
class TestTimers implements Timers {
  nowMs = 1_000_000;
  private queue: { at: number; fn: () => void; id: number }[] = [];
  private nextId = 1;

  now(): number {
    return this.nowMs;
  }

  setTimeout(fn: () => void, ms: number): unknown {
    const id = this.nextId++;
    this.queue.push({ at: this.nowMs + ms, fn, id });
    return id;
  }

  clearTimeout(handle: unknown): void {
    this.queue = this.queue.filter((t) => t.id !== handle);
  }

  async advance(ms: number): Promise<void> {
    const target = this.nowMs + ms;
    for (;;) {
      const due = this.queue.filter((t) => t.at <= target).sort((a, b) => a.at - b.at)[0];
      if (!due) break;
      this.queue = this.queue.filter((t) => t.id !== due.id);
      this.nowMs = due.at;
      due.fn();
      await flush();
    }
    this.nowMs = target;
    await flush();
  }
}

const flush = () => new Promise<void>((resolve) => setTimeout(resolve, 0));

interface AnswerLog {
  subject: string;
  questionId: number;
  choice: Side;
  elapsedMs: number;
}

/** In-memory stand-in for the service, enforcing the same protocol rules. */
class MockServer implements Transport {
  answers: AnswerLog[] = [];
  failNext = false;
  private servedAt = new Map<string, number>();
  private answered = new Map<string, Set<number>>();
  private subjects = new Map<string, string>();

  constructor(
    private clock: TestTimers,
    private questionsPerSubject: number,
  ) {}

  async openSession(subjectId: string): Promise<{ token: string; total: number }> {
    const token = `tok-${subjectId}`;
    this.subjects.set(token, subjectId);
    this.answered.set(token, this.answered.get(token) ?? new Set());
    return { token, total: this.questionsPerSubject };
  }

  async nextQuestion(token: string): Promise<QuestionPayload> {
    const doneSet = this.answered.get(token)!;
    const next = [...Array(this.questionsPerSubject).keys()].find((q) => !doneSet.has(q));
    if (next === undefined) {
      return { done: true, answered: doneSet.size, total: this.questionsPerSubject };
    }
    this.servedAt.set(`${token}:${next}`, this.clock.now());
    return {
      done: false,
      question_id: next,
      image_id: `img${next}`,
      served_at: this.clock.now(),
      min_view_ms: MIN_VIEW_MS,
      media: { stimulus: "s.png", gsm: "g.png", left: "l.png", right: "r.png" },
      answered: doneSet.size,
      total: this.questionsPerSubject,
    };
  }

  async submitAnswer(token: string, questionId: number, choice: Side): Promise<AnswerResult> {
    if (this.failNext) {
      this.failNext = false;
      throw new Error("network down");
    }
    const doneSet = this.answered.get(token)!;
    if (doneSet.has(questionId)) return { kind: "duplicate" };
    const served = this.servedAt.get(`${token}:${questionId}`);
    if (served === undefined) return { kind: "error", status: 409 };
    const elapsed = this.clock.now() - served;
    if (elapsed < MIN_VIEW_MS) {
      return { kind: "too_early", retryAfterMs: MIN_VIEW_MS - elapsed };
    }
    doneSet.add(questionId);
    this.answers.push({
      subject: this.subjects.get(token)!,
      questionId,
      choice,
      elapsedMs: elapsed,
    });
    return { kind: "ok", answered: doneSet.size, total: this.questionsPerSubject };
  }

  async heartbeat(_token: string, tabId: string): Promise<{ active_tab: string }> {
    return { active_tab: tabId };
  }
}

interface Recorded {
  locks: number[];
  unlocks: number;
  notices: string[];
  retryVisible: boolean[];
  done: boolean;
  fatal: string[];
}

function recorder(): { events: FlowEvents; log: Recorded } {
  const log: Recorded = { locks: [], unlocks: 0, notices: [], retryVisible: [], done: false, fatal: [] };
  const events: FlowEvents = {
    question() {},
    locked(ms) {
      log.locks.push(ms);
    },
    unlocked() {
      log.unlocks += 1;
    },
    progress() {},
    notice(text) {
      log.notices.push(text);
    },
    retryBanner(visible) {
      log.retryVisible.push(visible);
    },
    done() {
      log.done = true;
    },
    fatal(text) {
      log.fatal.push(text);
    },
  };
  return { events, log };
}

async function startFlow(server: MockServer, timers: TestTimers, subject: string) {
  const { events, log } = recorder();
  const flow = new QuestionFlow(server, events, timers);
  await flow.start(subject);
  await flush();
  return { flow, log };
}

describe("viewing gate", () => {
  it("ignores clicks while locked and unlocks at exactly the minimum time", async () => {
    const timers = new TestTimers();
    const server = new MockServer(timers, 3);
    const { flow, log } = await startFlow(server, timers, "a");

    expect(flow.isLocked).toBe(true);
    await flow.choose("left");
    expect(server.answers).toHaveLength(0); // nothing sent while locked

    await timers.advance(MIN_VIEW_MS - 1);
    expect(flow.isLocked).toBe(true);
    expect(log.unlocks).toBe(0);

    await timers.advance(1); // exactly >= 5 s now
    expect(flow.isLocked).toBe(false);
    expect(log.unlocks).toBe(1);

    await flow.choose("left");
    await flush();
    expect(server.answers).toHaveLength(1);
    expect(server.answers[0]).toMatchObject({ questionId: 0, choice: "left" });
    expect(server.answers[0]!.elapsedMs).toBeGreaterThanOrEqual(MIN_VIEW_MS);
  });

  it("re-locks for the remaining time when the server answers 422", async () => {
    const timers = new TestTimers();
    const server = new MockServer(timers, 2);
    const { flow, log } = await startFlow(server, timers, "a");

    // unlock the client early by hand, as if the client clock drifted
    await timers.advance(2000);
    (flow as unknown as { lockedUntil: number }).lockedUntil = timers.now() - 1;
    await flow.choose("right");
    await flush();
    expect(server.answers).toHaveLength(0);
    // server said too_early with 3000 ms left; the client re-locked
    expect(log.locks.at(-1)).toBe(3000);
    expect(flow.isLocked).toBe(true);

    await timers.advance(3000);
    await flow.choose("right");
    await flush();
    expect(server.answers).toHaveLength(1);
  });
});

describe("duplicates and failures", () => {
  it("skips to the next question on 409", async () => {
    const timers = new TestTimers();
    const server = new MockServer(timers, 2);
    const { flow, log } = await startFlow(server, timers, "a");

    await timers.advance(MIN_VIEW_MS);
    // simulate another tab answering question 0 behind our back
    await server.submitAnswer("tok-a", 0, "left");
    await flow.choose("right");
    await flush();
    expect(log.notices.some((n) => n.includes("already answered"))).toBe(true);
    expect(flow.currentQuestion?.question_id).toBe(1);
  });

  it("keeps the pending choice across a network failure and retries it", async () => {
    const timers = new TestTimers();
    const server = new MockServer(timers, 1);
    const { flow, log } = await startFlow(server, timers, "a");

    await timers.advance(MIN_VIEW_MS);
    server.failNext = true;
    await flow.choose("left");
    await flush();
    expect(server.answers).toHaveLength(0);
    expect(flow.hasPendingChoice).toBe(true);
    expect(log.retryVisible.at(-1)).toBe(true);

    await flow.retry();
    await flush();
    expect(server.answers).toHaveLength(1);
    expect(server.answers[0]!.choice).toBe("left");
    expect(log.retryVisible.at(-1)).toBe(false);
    expect(log.done).toBe(true);
  });
});

describe("full scripted session", () => {
  it("two subjects answer ten questions each, exactly as scripted", async () => {
    const timers = new TestTimers();
    const server = new MockServer(timers, 10);
    const script: Record<string, Side[]> = {
      s0: ["left", "right", "left", "left", "right", "right", "left", "right", "left", "left"],
      s1: ["right", "right", "left", "right", "left", "left", "right", "left", "right", "right"],
    };

    for (const subject of Object.keys(script)) {
      const { flow, log } = await startFlow(server, timers, subject);
      for (const side of script[subject]!) {
        await timers.advance(MIN_VIEW_MS);
        await flow.choose(side);
        await flush();
      }
      expect(log.done).toBe(true);
      expect(log.fatal).toHaveLength(0);
    }

    expect(server.answers).toHaveLength(20);
    for (const row of server.answers) {
      expect(row.choice).toBe(script[row.subject]![row.questionId]);
      expect(row.elapsedMs).toBeGreaterThanOrEqual(MIN_VIEW_MS);
    }
  });
});
