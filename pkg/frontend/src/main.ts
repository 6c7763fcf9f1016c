/** DOM wiring: renders questions, a countdown, and the choice buttons. */

import { HttpTransport } from "./api.js";
import { QuestionFlow, type Side } from "./flow.js";

const TOKEN_KEY = "salbench_token";
const HEARTBEAT_MS = 4000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const transport = new HttpTransport("");
  const tabId = Math.random().toString(36).slice(2);
  let countdownTimer: ReturnType<typeof setInterval> | null = null;
  let active = true;

  const stage = el<HTMLDivElement>("stage");
  const login = el<HTMLDivElement>("login");
  const noticeBox = el<HTMLDivElement>("notice");
  const retryBox = el<HTMLDivElement>("retry");
  const progressBox = el<HTMLSpanElement>("progress");
  const countdownBox = el<HTMLSpanElement>("countdown");
  const leftBtn = el<HTMLButtonElement>("choose-left");
  const rightBtn = el<HTMLButtonElement>("choose-right");

  const setButtons = (enabled: boolean) => {
    leftBtn.disabled = !enabled;
    rightBtn.disabled = !enabled;
  };

  const flow = new QuestionFlow(transport, {
    question(q) {
      login.hidden = true;
      stage.hidden = false;
      el<HTMLImageElement>("img-stimulus").src = q.media!.stimulus;
      el<HTMLImageElement>("img-gsm").src = q.media!.gsm;
      el<HTMLImageElement>("img-left").src = q.media!.left;
      el<HTMLImageElement>("img-right").src = q.media!.right;
      el<HTMLSpanElement>("image-id").textContent = q.image_id ?? "";
    },
    locked(remainingMs) {
      setButtons(false);
      if (countdownTimer !== null) clearInterval(countdownTimer);
      const until = Date.now() + remainingMs;
      const tick = () => {
        const left = Math.max(0, until - Date.now());
        countdownBox.textContent = left > 0 ? `${(left / 1000).toFixed(1)}s` : "";
      };
      tick();
      countdownTimer = setInterval(tick, 100);
    },
    unlocked() {
      if (countdownTimer !== null) clearInterval(countdownTimer);
      countdownBox.textContent = "";
      setButtons(true);
    },
    progress(answered, total) {
      progressBox.textContent = `${answered} / ${total}`;
    },
    notice(text) {
      noticeBox.textContent = text;
      noticeBox.hidden = false;
      setTimeout(() => (noticeBox.hidden = true), 4000);
    },
    retryBanner(visible) {
      retryBox.hidden = !visible;
    },
    done(answered, total) {
      stage.hidden = true;
      login.hidden = true;
      el<HTMLDivElement>("finished").hidden = false;
      progressBox.textContent = `${answered} / ${total}`;
    },
    fatal(text) {
      noticeBox.textContent = text;
      noticeBox.hidden = false;
    },
  });

  leftBtn.addEventListener("click", () => void flow.choose("left"));
  rightBtn.addEventListener("click", () => void flow.choose("right"));
  el<HTMLButtonElement>("retry-button").addEventListener("click", () => void flow.retry());
  document.addEventListener("keydown", (ev) => {
    if (!active || flow.isLocked) return;
    const side: Side | null = ev.key === "ArrowLeft" ? "left" : ev.key === "ArrowRight" ? "right" : null;
    if (side) void flow.choose(side);
  });

  el<HTMLFormElement>("login-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const subject = el<HTMLInputElement>("subject-id").value.trim();
    if (!subject) return;
    void flow.start(subject).then(() => {
      if (flow.sessionToken) localStorage.setItem(TOKEN_KEY, flow.sessionToken);
      startHeartbeat();
    });
  });

  const startHeartbeat = () => {
    setInterval(async () => {
      const token = flow.sessionToken;
      if (!token || !active) return;
      try {
        const beat = await transport.heartbeat(token, tabId);
        if (beat.active_tab !== tabId) {
          active = false;
          setButtons(false);
          noticeBox.textContent = "this session continued in a newer tab";
          noticeBox.hidden = false;
        }
      } catch {
        /* transient: the next beat will retry */
      }
    }, HEARTBEAT_MS);
  };

  // resuming with a stored token never re-presents answered questions: the
  // server serves only the next unanswered one
  const stored = localStorage.getItem(TOKEN_KEY);
  if (stored) {
    void flow.start("", stored).then(startHeartbeat);
  }
}

document.addEventListener("DOMContentLoaded", main);
