/** Page wiring: real fetch, real audio element, DOM rendering. */

import { httpTransport } from "./api.js";
import { App, trialCounter, type AudioSink, type UiState } from "./app.js";

/** Service base URL: ?service=... wins, else same origin. */
function serviceUrl(): string {
  const param = new URLSearchParams(window.location.search).get("service");
  return param ?? "";
}

class ElementAudioSink implements AudioSink {
  play(bytes: ArrayBuffer): Promise<void> {
    return new Promise((resolve, reject) => {
      const url = URL.createObjectURL(new Blob([bytes], { type: "audio/wav" }));
      const el = new Audio(url);
      const done = (err?: Error) => {
        URL.revokeObjectURL(url);
        err ? reject(err) : resolve();
      };
      el.onended = () => done();
      el.onerror = () => done(new Error("audio playback failed"));
      el.play().catch((e) => done(e instanceof Error ? e : new Error(String(e))));
    });
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const STATUS_TEXT: Record<UiState["phase"], string> = {
  loading: "Loading…",
  listening: "Listen…",
  "awaiting-choice": "Which word did you hear?",
  finished: "Done",
};

function main(): void {
  const app = new App(httpTransport(serviceUrl()), new ElementAudioSink());

  const setup = el<HTMLDivElement>("setup");
  const run = el<HTMLDivElement>("run");
  const resultCard = el<HTMLDivElement>("result");
  const counter = el<HTMLSpanElement>("counter");
  const status = el<HTMLParagraphElement>("status");
  const left = el<HTMLButtonElement>("option-left");
  const right = el<HTMLButtonElement>("option-right");
  const replayBtn = el<HTMLButtonElement>("replay");
  const errorBox = el<HTMLDivElement>("error");
  const errorText = el<HTMLSpanElement>("error-text");
  const retryBtn = el<HTMLButtonElement>("retry");
  const score = el<HTMLParagraphElement>("score");
  const category = el<HTMLHeadingElement>("category");
  const nItems = el<HTMLInputElement>("n-items");
  const hlSim = el<HTMLInputElement>("hl-sim");
  const startBtn = el<HTMLButtonElement>("start");
  const againBtn = el<HTMLButtonElement>("again");

  let started = false;

  app.subscribe((s) => {
    setup.hidden = started;
    run.hidden = !started || s.phase === "finished";
    resultCard.hidden = s.phase !== "finished";

    counter.textContent = trialCounter(s);
    status.textContent = STATUS_TEXT[s.phase];

    const choosable = s.phase === "awaiting-choice";
    left.disabled = !choosable;
    right.disabled = !choosable;
    replayBtn.disabled = !choosable;
    left.textContent = s.options ? s.options[0] : "…";
    right.textContent = s.options ? s.options[1] : "…";

    errorBox.hidden = !s.error;
    errorText.textContent = s.error ?? "";

    if (s.result) {
      // display only; both numbers come from the service
      score.textContent = `Score: ${s.result.score_pct.toFixed(1)}%`;
      category.textContent = s.result.category;
    }
  });

  const begin = () => {
    started = true;
    void app.start(Math.max(1, Number(nItems.value) || 10), {
      hl_sim: hlSim.checked || undefined,
    });
  };
  startBtn.onclick = begin;
  againBtn.onclick = begin;
  left.onclick = () => void app.choose(left.textContent ?? "");
  right.onclick = () => void app.choose(right.textContent ?? "");
  replayBtn.onclick = () => void app.replay();
  retryBtn.onclick = () => void app.retry();
  window.addEventListener("keydown", (e) => app.handleKey(e.key));

  // grey out the HL toggle when the service has no profile loaded
  httpTransport(serviceUrl())
    .health()
    .then((h) => {
      hlSim.disabled = !h.hl_sim_available;
    })
    .catch(() => undefined);
}

main();
