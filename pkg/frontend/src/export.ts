// CSV download. The bytes come straight from the service and go into the
// file untouched; re-serializing client-side would risk drifting from what
// the batch tool writes.

export interface ExportDeps {
  document: Pick<Document, "createElement">;
  url: Pick<typeof URL, "createObjectURL" | "revokeObjectURL">;
}

export function exportCsv(
  filename: string,
  bytes: Uint8Array,
  deps: ExportDeps = { document, url: URL },
): void {
  const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "text/csv" });
  const href = deps.url.createObjectURL(blob);
  const anchor = deps.document.createElement("a");
  anchor.href = href;
  anchor.download = filename;
  anchor.click();
  deps.url.revokeObjectURL(href);
}

export function csvFilename(g: string, T: number): string {
  const slug = g.replace(/[^a-z0-9]+/gi, "-").replace(/^-+|-+$/g, "") || "kernel";
  return `cdf-${slug}-T${T}.csv`;
}
