/** HTML fragments for the engine tables; string-building keeps these
 * independently testable. */

export function renderCodeCacheTable(rows: Array<Record<string, unknown>>): string {
  const body = rows.map((r) =>
    `<tr><td>${escapeHtml(String(r.owner ?? ""))}</td>` +
    `<td>${escapeHtml(String(r.selector ?? ""))}</td>` +
    `<td>${r.pinned ? "pinned" : ""}</td></tr>`).join("");
  return `<table class="code-cache"><thead><tr><th>class</th><th>selector</th>` +
    `<th></th></tr></thead><tbody>${body}</tbody></table>`;
}

export function renderSendSiteTable(rows: Array<Record<string, unknown>>): string {
  const body = rows.map((r) =>
    `<tr><td>#${escapeHtml(String(r.selector ?? ""))}</td>` +
    `<td>${escapeHtml(String(r.cachedBehavior ?? "-"))}</td>` +
    `<td>${String(r.rebinds ?? 0)}</td>` +
    `<td>${r.megamorphic ? "megamorphic" : ""}</td></tr>`).join("");
  return `<table class="send-sites"><thead><tr><th>selector</th><th>cached class</th>` +
    `<th>rebinds</th><th></th></tr></thead><tbody>${body}</tbody></table>`;
}

export function renderEngineStats(stats: Record<string, unknown> | null): string {
  if (!stats) return "<p>no engine statistics yet</p>";
  const rows = Object.entries(stats).map(([k, v]) =>
    `<tr><td>${escapeHtml(k)}</td><td>${escapeHtml(String(v))}</td></tr>`).join("");
  return `<table class="engine-stats"><tbody>${rows}</tbody></table>`;
}

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) => ({
    "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;",
  }[c] as string));
}
