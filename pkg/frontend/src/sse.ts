// Server-sent event parsing and a resumable subscription.
//
// The gateway sets `id:` to the gapless event seq, so resuming is just
// reconnecting with ?from=<lastSeq + 1>. The frame parser is pure so the
// fold can be tested against raw stream bytes without a browser.

import type { EventRecord } from "./types.js";

export interface SseFrame {
  id?: string;
  event?: string;
  data?: string;
}

export class SseParser {
  private buffer = "";

  /** Feed a chunk; returns completed frames (comment frames dropped). */
  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let cut: number;
    while ((cut = this.buffer.indexOf("\n\n")) !== -1) {
      const raw = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      const frame: SseFrame = {};
      for (const line of raw.split("\n")) {
        if (line.startsWith(":")) continue;
        const sep = line.indexOf(": ");
        if (sep === -1) continue;
        const field = line.slice(0, sep);
        const value = line.slice(sep + 2);
        if (field === "id" || field === "event" || field === "data") {
          frame[field] = value;
        }
      }
      if (frame.id !== undefined || frame.data !== undefined) frames.push(frame);
    }
    return frames;
  }
}

export function frameToEvent(frame: SseFrame): EventRecord | null {
  if (!frame.data) return null;
  try {
    return JSON.parse(frame.data) as EventRecord;
  } catch {
    return null;
  }
}

export interface EventSourceLike {
  onmessage: ((ev: { lastEventId: string; data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

/**
 * Resumable subscription: reconnects from the last folded seq, so the view
 * after a drop-and-resume equals an uninterrupted session.
 */
export class EventStream {
  private source: EventSourceLike | null = null;
  private lastSeq = 0;
  private closed = false;

  constructor(
    private baseUrl: string,
    private onEvent: (ev: EventRecord) => void,
    private makeSource: EventSourceFactory = (url) =>
      new (globalThis as any).EventSource(url) as EventSourceLike,
    private reconnectDelayMs = 1000,
  ) {}

  start(fromSeq = 1): void {
    this.lastSeq = fromSeq - 1;
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    this.source = this.makeSource(`${this.baseUrl}/events?from=${this.lastSeq + 1}`);
    this.source.onmessage = (msg) => {
      let record: EventRecord;
      try {
        record = JSON.parse(msg.data) as EventRecord;
      } catch {
        return;
      }
      if (record.seq <= this.lastSeq) return; // duplicate after reconnect
      this.lastSeq = record.seq;
      this.onEvent(record);
    };
    this.source.onerror = () => {
      this.source?.close();
      if (!this.closed) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
      }
    };
  }

  close(): void {
    this.closed = true;
    this.source?.close();
  }
}
