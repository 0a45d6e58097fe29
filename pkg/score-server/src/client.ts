/** Minimal client for the score wire protocol, used by the tests and tools. */

import { Socket } from "node:net";
import {
  TAG_ERROR,
  TAG_REQUEST,
  TAG_RESPONSE,
  WIRE_MAGIC,
} from "./server.js";

export class RemoteServerError extends Error {
  constructor(public code: number) {
    super(`score server returned error code ${code}`);
  }
}

export class ScoreClient {
  readonly sigmaMin: number = NaN;
  readonly sigmaMax: number = NaN;
  private socket!: Socket;
  private pending: Buffer = Buffer.alloc(0);
  private waiter: { resolve: (b: Buffer) => void; reject: (e: Error) => void; need: number } | null =
    null;

  private constructor(
    private width: number,
    private height: number,
  ) {}

  static async connect(host: string, port: number, width: number, height: number): Promise<ScoreClient> {
    const client = new ScoreClient(width, height);
    const socket = new Socket();
    client.socket = socket;
    await new Promise<void>((resolve, reject) => {
      socket.once("error", reject);
      socket.connect(port, host, resolve);
    });
    socket.setNoDelay(true);
    socket.on("data", (chunk) => client.onData(chunk));
    socket.on("close", () => {
      if (client.waiter) {
        client.waiter.reject(new Error("connection closed mid-frame"));
        client.waiter = null;
      }
    });
    const hello = Buffer.alloc(12);
    hello.write(WIRE_MAGIC, 0, "latin1");
    hello.writeUInt32LE(width, 4);
    hello.writeUInt32LE(height, 8);
    socket.write(hello);
    const reply = await client.read(12);
    if (reply.toString("latin1", 0, 4) !== WIRE_MAGIC) {
      socket.destroy();
      throw new Error("bad handshake magic from server");
    }
    (client as { sigmaMin: number }).sigmaMin = reply.readFloatLE(4);
    (client as { sigmaMax: number }).sigmaMax = reply.readFloatLE(8);
    return client;
  }

  private onData(chunk: Buffer): void {
    this.pending = this.pending.length === 0 ? chunk : Buffer.concat([this.pending, chunk]);
    this.tryDeliver();
  }

  private tryDeliver(): void {
    if (this.waiter && this.pending.length >= this.waiter.need) {
      const frame = this.pending.subarray(0, this.waiter.need);
      this.pending = this.pending.subarray(this.waiter.need);
      const w = this.waiter;
      this.waiter = null;
      w.resolve(frame);
    }
  }

  private read(need: number): Promise<Buffer> {
    return new Promise((resolve, reject) => {
      this.waiter = { resolve, reject, need };
      this.tryDeliver();
    });
  }

  /** One round trip; x is sent as float32. Server error frames reject with the code. */
  async score(x: Float64Array | Float32Array, sigma: number): Promise<Float64Array> {
    const n = this.width * this.height;
    if (x.length !== n) throw new Error(`payload has ${x.length} pixels, handshake said ${n}`);
    const frame = Buffer.alloc(5 + n * 4);
    frame.writeUInt8(TAG_REQUEST, 0);
    frame.writeFloatLE(sigma, 1);
    for (let i = 0; i < n; i++) frame.writeFloatLE(x[i], 5 + i * 4);
    this.socket.write(frame);
    const head = await this.read(1);
    const tag = head.readUInt8(0);
    if (tag === TAG_ERROR) {
      const code = await this.read(4);
      throw new RemoteServerError(code.readUInt32LE(0));
    }
    if (tag !== TAG_RESPONSE) throw new Error(`unexpected response tag 0x${tag.toString(16)}`);
    const payload = await this.read(n * 4);
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) out[i] = payload.readFloatLE(i * 4);
    return out;
  }

  /** Raw frame exchange for transcript tests: write bytes, read an exact count back. */
  async exchange(bytes: Buffer, expect: number): Promise<Buffer> {
    this.socket.write(bytes);
    return this.read(expect);
  }

  close(): void {
    this.socket.destroy();
  }
}
