/**
 * Minimal reader for the toolkit's delimited files: UTF-8, comma-separated,
 * one header row, optional leading `#` provenance lines. Identifiers are
 * guaranteed comma-free by the writer, so no quoting is needed.
 */

import { readFileSync } from "node:fs";

export interface CsvTable {
  provenance: string;
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string, expectedHeader?: string[]): CsvTable {
  let provenance = "";
  let header: string[] | null = null;
  const rows: string[][] = [];
  for (const raw of text.split("\n")) {
    if (raw.length === 0) continue;
    if (raw.startsWith("#")) {
      if (!provenance) provenance = raw.replace(/^#\s*/, "");
      continue;
    }
    const cells = raw.split(",");
    if (header === null) {
      header = cells;
      if (expectedHeader && expectedHeader.join(",") !== cells.join(",")) {
        throw new Error(`unexpected header: got [${cells}], want [${expectedHeader}]`);
      }
      continue;
    }
    if (cells.length !== header.length) {
      throw new Error(`row has ${cells.length} fields, header has ${header.length}`);
    }
    rows.push(cells);
  }
  if (header === null) throw new Error("missing header row");
  return { provenance, header, rows };
}

export function readCsvFile(path: string, expectedHeader?: string[]): CsvTable {
  try {
    return parseCsv(readFileSync(path, "utf8"), expectedHeader);
  } catch (err) {
    throw new Error(`${path}: ${(err as Error).message}`);
  }
}

export function asNumber(cell: string, where: string): number {
  const value = Number(cell);
  if (!Number.isFinite(value)) throw new Error(`${where}: not a number: ${cell}`);
  return value;
}
