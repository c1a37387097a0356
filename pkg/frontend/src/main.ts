import { ApiClient } from "./api";
import { API_BASE } from "./config";
import { renderError, renderHint, renderHistory, renderPlaylist } from "./render";
import { UiSession } from "./session";

const session = new UiSession(new ApiClient(API_BASE));

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const form = el<HTMLFormElement>("query-form");
const queryInput = el<HTMLInputElement>("query-input");
const userInput = el<HTMLInputElement>("user-input");
const submitBtn = el<HTMLButtonElement>("submit-btn");
const banner = el<HTMLDivElement>("banner");
const result = el<HTMLDivElement>("result");
const historyBox = el<HTMLDivElement>("history");

function refreshHistory(): void {
  historyBox.innerHTML = renderHistory(session.history);
}

function showCurrent(): void {
  if (session.current) {
    result.innerHTML = renderPlaylist(session.current, session.hasListened(session.current.playlist_id));
  }
}

async function submit(): Promise<void> {
  const query = queryInput.value.trim();
  const userId = userInput.value.trim() || "anonymous";
  if (!query) {
    banner.innerHTML = renderHint("Type what you want to listen to first.");
    return;
  }
  submitBtn.disabled = true;
  submitBtn.textContent = "Generating…";
  banner.innerHTML = "";
  try {
    const outcome = await session.submit(userId, query);
    if (outcome.kind === "playlist") {
      showCurrent();
    } else if (outcome.kind === "hint") {
      banner.innerHTML = renderHint(outcome.hint);
    } else if (outcome.kind === "error") {
      banner.innerHTML = renderError(outcome.message);
    }
  } finally {
    submitBtn.disabled = false;
    submitBtn.textContent = "Generate";
    refreshHistory();
  }
}

form.addEventListener("submit", (event) => {
  event.preventDefault();
  void submit();
});

result.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.id !== "listen-btn" || target.hasAttribute("disabled")) {
    return;
  }
  void (async () => {
    const outcome = await session.markListened();
    if (typeof outcome === "object") {
      banner.innerHTML = renderError(`Could not record the event: ${outcome.error}`);
      return;
    }
    if (outcome === "stored" || outcome === "duplicate") {
      showCurrent();
    }
  })();
});

historyBox.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const query = target.dataset.query;
  if (query) {
    queryInput.value = query;
    void submit(); // reformulation reuses the exact same submit path
  }
});
