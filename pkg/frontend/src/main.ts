// DOM wiring for the editing loop: upload, invert with live progress, the
// invertibility overlay under a tau slider (preview only; re-inverting is an
// explicit button), and the edit panel whose controls mirror server verdicts.

import {
  fetchDirections,
  fetchInvertibility,
  pollJob,
  postEdit,
  renderUrl,
  RequestLane,
  submitInvert,
} from "./api";
import { debounce } from "./debounce";
import { resolveEditPane } from "./editpane";
import {
  coverageSummary,
  cssColor,
  deepenedPixels,
  overlayDataUrl,
} from "./overlay";
import { clampTau, editControlsEnabled, initialState, type SessionState } from "./state";
import { pushToast } from "./toast";
import type { DirectionInfo, InvertibilityPayload } from "./types";
import { annotateDirections, annotationLabel } from "./verdicts";

const state: SessionState = { ...initialState };
let imageB64: string | null = null;
let overlayPayload: InvertibilityPayload | null = null;
let directions: DirectionInfo[] = [];

const overlayLane = new RequestLane();
const editLane = new RequestLane();

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const fileInput = $<HTMLInputElement>("file");
const tauInput = $<HTMLInputElement>("tau");
const tauValue = $<HTMLSpanElement>("tau-value");
const invertBtn = $<HTMLButtonElement>("invert");
const reinvertBtn = $<HTMLButtonElement>("reinvert");
const progress = $<HTMLProgressElement>("progress");
const statusEl = $<HTMLSpanElement>("status");
const paneTarget = $<HTMLImageElement>("pane-target");
const paneInversion = $<HTMLImageElement>("pane-inversion");
const paneOverlay = $<HTMLImageElement>("pane-overlay");
const paneEdited = $<HTMLImageElement>("pane-edited");
const editNote = $<HTMLSpanElement>("edit-note");
const overlayToggle = $<HTMLInputElement>("overlay-visible");
const legendEl = $<HTMLDivElement>("legend");
const coverageEl = $<HTMLDivElement>("coverage");
const datasetSelect = $<HTMLSelectElement>("dataset");
const directionSelect = $<HTMLSelectElement>("direction");
const magnitudeInput = $<HTMLInputElement>("magnitude");
const magnitudeValue = $<HTMLSpanElement>("magnitude-value");
const blockedBox = $<HTMLDivElement>("blocked");
const blockedText = $<HTMLSpanElement>("blocked-text");
const forceBtn = $<HTMLButtonElement>("force");

function setStatus(text: string) {
  statusEl.textContent = text;
}

function syncControls() {
  const on = editControlsEnabled(state);
  directionSelect.disabled = !on;
  magnitudeInput.disabled = !on;
  reinvertBtn.hidden = !on || Math.abs(state.tau - (overlayPayload?.tau ?? state.tau)) < 1e-9;
}

function renderLegend(p: InvertibilityPayload) {
  legendEl.replaceChildren(
    ...p.legend.map((e) => {
      const row = document.createElement("div");
      row.className = "legend-entry";
      const swatch = document.createElement("span");
      swatch.className = "legend-swatch";
      swatch.style.background = cssColor(e.color);
      const label = document.createElement("span");
      label.textContent = e.space;
      row.append(swatch, label);
      return row;
    }),
  );
  coverageEl.textContent = coverageSummary(p);
}

function renderDirectionOptions() {
  if (!overlayPayload) return;
  const annotated = annotateDirections(directions, overlayPayload.coverage);
  const current = state.direction;
  directionSelect.replaceChildren(
    ...annotated.map((a) => {
      const opt = document.createElement("option");
      opt.value = a.name;
      opt.textContent = annotationLabel(a);
      opt.disabled = !a.enabled;
      return opt;
    }),
  );
  const usable = annotated.find((a) => a.name === current && a.enabled)
    ?? annotated.find((a) => a.enabled);
  state.direction = usable ? usable.name : null;
  if (state.direction) directionSelect.value = state.direction;
}

function applyOverlay(p: InvertibilityPayload, expectShallower: boolean) {
  if (overlayPayload && expectShallower) {
    const deepened = deepenedPixels(overlayPayload, p);
    if (deepened.length > 0) {
      console.warn("server sent a deepened assignment for a raised tau", deepened[0]);
    }
  }
  overlayPayload = p;
  paneOverlay.src = overlayDataUrl(p);
  paneOverlay.hidden = !state.overlayVisible;
  renderLegend(p);
  renderDirectionOptions();
  syncControls();
}

async function refreshOverlay(tau: number) {
  if (!state.bundleId) return;
  const bundle = state.bundleId;
  const raised = overlayPayload !== null && tau > overlayPayload.tau;
  await overlayLane.run(async () => {
    try {
      applyOverlay(await fetchInvertibility(bundle, tau), raised);
    } catch (err) {
      pushToast(`overlay fetch failed: ${(err as Error).message}`);
      // stale overlay stays on screen
    }
  });
}

async function refreshDirections() {
  try {
    const payload = await fetchDirections(datasetSelect.value);
    directions = payload.directions;
    renderDirectionOptions();
  } catch (err) {
    pushToast(`directions unavailable: ${(err as Error).message}`);
  }
}

async function runEdit(force = false) {
  if (!editControlsEnabled(state) || !state.bundleId || !state.direction) return;
  const bundle = state.bundleId;
  const direction = state.direction;
  const magnitude = state.magnitude;
  await editLane.run(async () => {
    try {
      const result = await resolveEditPane({
        magnitude,
        inversionSrc: paneInversion.src,
        post: () =>
          postEdit(bundle, {
            direction,
            dataset: datasetSelect.value,
            magnitude,
            force,
          }),
      });
      if (result.blocked) {
        blockedBox.hidden = false;
        blockedText.textContent =
          `"${direction}" does not survive regions assigned to ` +
          `${result.blocked.verdict.failing.join(", ")}.`;
        editNote.textContent = "(blocked)";
        return;
      }
      blockedBox.hidden = true;
      if (result.src) paneEdited.src = result.src;
      editNote.textContent = result.identicalToInversion
        ? "(magnitude 0: identical to inversion)"
        : `(${direction} @ ${magnitude.toFixed(1)})`;
    } catch (err) {
      pushToast(`edit failed: ${(err as Error).message}`);
    }
  });
}

async function startInversion(tau: number) {
  if (!imageB64) return;
  invertBtn.disabled = true;
  reinvertBtn.hidden = true;
  progress.hidden = false;
  progress.value = 0;
  state.phase = "queued";
  setStatus("queued");
  syncControls();
  try {
    const jobId = await submitInvert(imageB64, tau);
    state.jobId = jobId;
    const finished = await pollJob(jobId, (s) => {
      state.phase = s.state;
      progress.value = s.progress;
      setStatus(`${s.state} ${(s.progress * 100).toFixed(0)}%`);
    });
    if (finished.state === "failed" || !finished.bundle_id) {
      state.phase = "failed";
      pushToast(`inversion failed: ${finished.error ?? "unknown error"}`);
      setStatus("failed");
      return;
    }
    state.bundleId = finished.bundle_id;
    state.phase = "done";
    setStatus("done");
    paneInversion.src = renderUrl(finished.bundle_id);
    paneEdited.src = renderUrl(finished.bundle_id);
    editNote.textContent = "(magnitude 0: identical to inversion)";
    overlayPayload = null;
    await refreshOverlay(tau);
    await refreshDirections();
  } catch (err) {
    state.phase = "failed";
    pushToast(`inversion failed: ${(err as Error).message}`);
    setStatus("failed");
  } finally {
    invertBtn.disabled = imageB64 === null;
    progress.hidden = true;
    syncControls();
  }
}

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  const reader = new FileReader();
  reader.onload = () => {
    const url = reader.result as string;
    state.imageDataUrl = url;
    imageB64 = url.slice(url.indexOf(",") + 1);
    paneTarget.src = url;
    invertBtn.disabled = false;
    setStatus("ready");
  };
  reader.readAsDataURL(file);
});

invertBtn.addEventListener("click", () => void startInversion(state.tau));

reinvertBtn.addEventListener("click", () => {
  if (window.confirm(`re-invert at tau = ${state.tau.toFixed(2)}? This runs a new optimization.`)) {
    void startInversion(state.tau);
  }
});

const debouncedOverlay = debounce((tau: number) => void refreshOverlay(tau), 250);
tauInput.addEventListener("input", () => {
  state.tau = clampTau(parseFloat(tauInput.value));
  tauValue.textContent = state.tau.toFixed(2);
  syncControls();
  debouncedOverlay(state.tau);
});

overlayToggle.addEventListener("change", () => {
  state.overlayVisible = overlayToggle.checked;
  paneOverlay.hidden = !state.overlayVisible;
});

datasetSelect.addEventListener("change", () => void refreshDirections());

directionSelect.addEventListener("change", () => {
  state.direction = directionSelect.value;
  blockedBox.hidden = true;
  void runEdit();
});

const debouncedEdit = debounce(() => void runEdit(), 250);
magnitudeInput.addEventListener("input", () => {
  state.magnitude = parseFloat(magnitudeInput.value);
  magnitudeValue.textContent = state.magnitude.toFixed(1);
  debouncedEdit();
});

forceBtn.addEventListener("click", () => {
  if (window.confirm("Render anyway? Pinned regions will not follow this edit.")) {
    void runEdit(true);
  }
});

setStatus("choose an image");
syncControls();
