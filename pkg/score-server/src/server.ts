/**
 * Score wire protocol server.
 *
 * Handshake: client "SCR1" + u32 width + u32 height (LE); server "SCR1" +
 * f32 sigma_min + f32 sigma_max. Request: 0x01 + f32 sigma + w*h f32 payload.
 * Response: 0x02 + w*h f32 payload, or 0xFF + u32 code. One request in
 * flight per connection; any number of connections.
 *
 * Error codes: 1 malformed handshake (bad magic or implausible grid),
 * 2 unknown request tag, 3 sigma outside the advertised bounds, 4 model
 * evaluation failed. Codes 3 and 4 keep the
 * connection open (the frame length is known, the stream stays in sync);
 * codes 1 and 2 end it because resynchronization is impossible.
 */

import { createServer, Server, Socket } from "node:net";
import { ScoreFn } from "./analytic.js";
import { DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN } from "./schedule.js";

export const WIRE_MAGIC = "SCR1";
export const TAG_REQUEST = 0x01;
export const TAG_RESPONSE = 0x02;
export const TAG_ERROR = 0xff;
export const ERR_BAD_MAGIC = 1;
export const ERR_BAD_TAG = 2;
export const ERR_SIGMA_RANGE = 3;
export const ERR_EVAL_FAILED = 4;

export interface ServerConfig {
  model: ScoreFn;
  sigmaMin?: number;
  sigmaMax?: number;
  maxPixels?: number;
}

function errorFrame(code: number): Buffer {
  const buf = Buffer.alloc(5);
  buf.writeUInt8(TAG_ERROR, 0);
  buf.writeUInt32LE(code, 1);
  return buf;
}

class Connection {
  private pending: Buffer = Buffer.alloc(0);
  private width = 0;
  private height = 0;
  private frameLen = 0; // request frame size once the handshake fixed the grid

  constructor(
    private socket: Socket,
    private model: ScoreFn,
    private sigmaMin: number, // advertised, f32-rounded
    private sigmaMax: number,
    private maxPixels: number,
  ) {
    socket.setNoDelay(true);
    socket.on("data", (chunk) => this.onData(chunk));
    socket.on("error", () => socket.destroy());
  }

  private onData(chunk: Buffer): void {
    this.pending = this.pending.length === 0 ? chunk : Buffer.concat([this.pending, chunk]);
    while (this.step()) {
      // drain every complete frame already buffered
    }
  }

  /** Consume one complete frame if available; false when more bytes are needed. */
  private step(): boolean {
    if (this.frameLen === 0) return this.handshake();
    if (this.pending.length < 1) return false;
    if (this.pending.readUInt8(0) !== TAG_REQUEST) {
      this.socket.end(errorFrame(ERR_BAD_TAG));
      return false;
    }
    if (this.pending.length < this.frameLen) return false;
    const frame = this.pending.subarray(0, this.frameLen);
    this.pending = this.pending.subarray(this.frameLen);
    this.handleRequest(frame);
    return true;
  }

  private handshake(): boolean {
    if (this.pending.length < 12) return false;
    const head = this.pending.subarray(0, 12);
    this.pending = this.pending.subarray(12);
    if (head.toString("latin1", 0, 4) !== WIRE_MAGIC) {
      this.socket.end(errorFrame(ERR_BAD_MAGIC));
      return false;
    }
    const width = head.readUInt32LE(4);
    const height = head.readUInt32LE(8);
    if (width === 0 || height === 0 || width * height > this.maxPixels) {
      this.socket.end(errorFrame(ERR_BAD_MAGIC));
      return false;
    }
    this.width = width;
    this.height = height;
    this.frameLen = 5 + width * height * 4;
    const reply = Buffer.alloc(12);
    reply.write(WIRE_MAGIC, 0, "latin1");
    reply.writeFloatLE(this.sigmaMin, 4);
    reply.writeFloatLE(this.sigmaMax, 8);
    this.socket.write(reply);
    return true;
  }

  private handleRequest(frame: Buffer): void {
    const sigma = frame.readFloatLE(1);
    if (!(sigma >= this.sigmaMin && sigma <= this.sigmaMax)) {
      this.socket.write(errorFrame(ERR_SIGMA_RANGE));
      return;
    }
    const n = this.width * this.height;
    const x = new Float64Array(n);
    for (let i = 0; i < n; i++) x[i] = frame.readFloatLE(5 + i * 4);
    let score: Float64Array;
    try {
      score = this.model(x, sigma, this.width, this.height);
      if (score.length !== n) throw new Error("bad model output size");
      for (let i = 0; i < n; i++) {
        if (!Number.isFinite(score[i])) throw new Error("non-finite score");
      }
    } catch {
      this.socket.write(errorFrame(ERR_EVAL_FAILED));
      return;
    }
    const reply = Buffer.alloc(1 + n * 4);
    reply.writeUInt8(TAG_RESPONSE, 0);
    for (let i = 0; i < n; i++) reply.writeFloatLE(score[i], 1 + i * 4);
    this.socket.write(reply);
  }
}

export class ScoreServer {
  readonly sigmaMin: number;
  readonly sigmaMax: number;
  private server: Server;
  private sockets = new Set<Socket>();

  constructor(cfg: ServerConfig) {
    // bounds live on the wire as float32; advertise and compare the rounded values
    this.sigmaMin = Math.fround(cfg.sigmaMin ?? DEFAULT_SIGMA_MIN);
    this.sigmaMax = Math.fround(cfg.sigmaMax ?? DEFAULT_SIGMA_MAX);
    const maxPixels = cfg.maxPixels ?? 4096 * 4096;
    this.server = createServer((socket) => {
      this.sockets.add(socket);
      socket.on("close", () => this.sockets.delete(socket));
      new Connection(socket, cfg.model, this.sigmaMin, this.sigmaMax, maxPixels);
    });
  }

  listen(host: string, port: number): Promise<{ host: string; port: number }> {
    return new Promise((resolve, reject) => {
      this.server.once("error", reject);
      this.server.listen(port, host, () => {
        const addr = this.server.address();
        if (addr === null || typeof addr === "string") {
          reject(new Error("unexpected listener address"));
          return;
        }
        resolve({ host: addr.address, port: addr.port });
      });
    });
  }

  close(): Promise<void> {
    for (const s of this.sockets) s.destroy();
    return new Promise((resolve) => this.server.close(() => resolve()));
  }
}
