import { isBusy, type ReviewSession } from "./state.js";

function esc(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function pct(p: number): string {
  return (p * 100).toFixed(1);
}

/**
 * Pure view: same session in, same markup out. Event handling happens via
 * data-action attributes and delegation in the controller, so this stays
 * snapshot-testable with no DOM required.
 */
export function render(session: ReviewSession): string {
  return [
    '<div class="app">',
    renderUpload(session),
    renderError(session),
    renderPreview(session),
    renderResults(session),
    renderHistory(session),
    "</div>",
  ].join("\n");
}

function renderUpload(session: ReviewSession): string {
  const disabled = isBusy(session) ? " disabled" : "";
  const status =
    session.phase === "uploading"
      ? '<span class="status">analyzing…</span>'
      : session.phase === "explaining"
        ? '<span class="status">rendering attention map…</span>'
        : "";
  return (
    '<section class="upload">' +
    `<label>Chest X-ray image <input type="file" accept="image/*" data-action="upload"${disabled}></label>` +
    status +
    "</section>"
  );
}

function renderError(session: ReviewSession): string {
  if (!session.error) return "";
  return (
    '<section class="error-banner" role="alert">' +
    `<span>${esc(session.error)}</span>` +
    '<button type="button" data-action="retry">Retry</button>' +
    "</section>"
  );
}

function renderPreview(session: ReviewSession): string {
  if (!session.previewUrl) return "";
  const showingOverlay = session.camOverlayUrl !== null;
  const src = showingOverlay ? session.camOverlayUrl! : session.previewUrl;
  const caption = showingOverlay
    ? `attention map: ${esc(session.camDisease ?? "")}`
    : "uploaded image";
  return (
    '<section class="preview">' +
    `<img alt="${caption}" src="${src}" class="${showingOverlay ? "overlay" : "raw"}">` +
    `<figcaption>${caption}</figcaption>` +
    "</section>"
  );
}

function renderResults(session: ReviewSession): string {
  const response = session.response;
  if (!response) return "";
  const top5 = new Set(response.top5.map((t) => t.disease));
  const flagged = new Set(response.flagged);
  const ordered = Object.entries(response.probabilities).sort(
    ([na, pa], [nb, pb]) => pb - pa || na.localeCompare(nb),
  );
  const rows = ordered.map(([disease, probability]) => {
    const classes = ["bar-row"];
    if (top5.has(disease)) classes.push("top5");
    const badge = flagged.has(disease)
      ? '<span class="badge" title="probability at or above the fitted threshold">flagged</span>'
      : "";
    const camButton = renderCamButton(session, disease);
    return (
      `<li class="${classes.join(" ")}" data-disease="${esc(disease)}">` +
      `<span class="name">${esc(disease)}</span>` +
      `<span class="track"><span class="fill" style="width:${pct(probability)}%"></span></span>` +
      `<span class="value">${probability.toFixed(2)}</span>` +
      badge +
      camButton +
      "</li>"
    );
  });
  const warning = response.warning
    ? `<p class="threshold-warning">${esc(response.warning)}</p>`
    : "";
  return (
    '<section class="results">' +
    `<h2>Findings <small class="fingerprint">model ${esc(response.model_fingerprint)}</small></h2>` +
    warning +
    `<ol class="bars">${rows.join("")}</ol>` +
    "</section>"
  );
}

function renderCamButton(session: ReviewSession, disease: string): string {
  if (!session.camSupported) {
    return (
      '<button type="button" class="cam" disabled ' +
      'title="attention maps are unavailable for this model backbone">CAM</button>'
    );
  }
  const active = session.camDisease === disease && session.camOverlayUrl !== null;
  const disabled = isBusy(session) ? " disabled" : "";
  return (
    `<button type="button" class="cam${active ? " active" : ""}" ` +
    `data-action="${active ? "cam-off" : "cam-on"}" data-disease="${esc(disease)}"${disabled}>` +
    (active ? "hide CAM" : "CAM") +
    "</button>"
  );
}

function renderHistory(session: ReviewSession): string {
  if (session.history.length === 0) return "";
  const items = session.history
    .map(
      (entry) =>
        `<li>${esc(entry.fileName)} — ${esc(entry.topDisease)} ` +
        `(${entry.topProbability.toFixed(2)})</li>`,
    )
    .join("");
  return `<section class="history"><h3>This session</h3><ul>${items}</ul></section>`;
}
