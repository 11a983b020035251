/**
 * Frame scheduling and canvas presentation.
 *
 * The pure helpers pick which frame belongs on screen at a given
 * elapsed time and expand 8-bit gray to RGBA; CanvasPresenter wires
 * them to a canvas with display-refresh scheduling and implements the
 * presenter contract the runner drives.  Between intervals the canvas
 * holds mean gray, the same level the quantizer maps zero luminance
 * to.
 */

import type { FrameStack } from "./api.js";
import type { Choice } from "./state.js";

export const MID_GRAY = 128;

/** Frame on screen after elapsedMs of playback at fps, clamped. */
export function frameIndexAt(
  elapsedMs: number,
  fps: number,
  nFrames: number,
): number {
  const index = Math.floor((elapsedMs / 1000) * fps);
  return Math.max(0, Math.min(nFrames - 1, index));
}

/** View of one frame's bytes inside the stack. */
export function frameSlice(stack: FrameStack, index: number): Uint8Array {
  const size = stack.width * stack.height;
  return stack.data.subarray(index * size, (index + 1) * size);
}

/** Expand one gray frame into an RGBA pixel buffer, alpha 255. */
export function grayToRGBA(
  gray: Uint8Array,
  rgba: Uint8ClampedArray,
): void {
  if (rgba.length !== gray.length * 4) {
    throw new Error(
      `rgba buffer holds ${rgba.length} bytes, need ${gray.length * 4}`,
    );
  }
  for (let i = 0; i < gray.length; i++) {
    const v = gray[i];
    const j = i * 4;
    rgba[j] = v;
    rgba[j + 1] = v;
    rgba[j + 2] = v;
    rgba[j + 3] = 255;
  }
}

/** What the runner needs from a presentation backend. */
export interface Presenter {
  now(): number;
  /** Fixation display; resolves after at least ms. */
  fixation(ms: number): Promise<void>;
  /** Play one interval's frames; resolves when playback ends. */
  playStack(stack: FrameStack, ms: number): Promise<void>;
  /** Blank mean-gray screen for ms. */
  blank(ms: number): Promise<void>;
  /** Resolve with the observer's forced choice. */
  awaitChoice(): Promise<{ choice: Choice; atMs: number }>;
}

interface PresenterOptions {
  /** Pixel scale factor for the canvas blit. */
  scale?: number;
}

/**
 * Canvas-backed presenter.  Playback schedules frames against
 * requestAnimationFrame timestamps, so each refresh shows the frame
 * whose index matches the elapsed time at the served rate; frames are
 * dropped rather than delayed when the display cannot keep up.
 */
export class CanvasPresenter implements Presenter {
  private readonly ctx: CanvasRenderingContext2D;
  private readonly scale: number;
  private keyResolver: ((pick: { choice: Choice; atMs: number }) => void) | null =
    null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    options: PresenterOptions = {},
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
    this.scale = options.scale ?? 3;
    window.addEventListener("keydown", (event) => this.onKey(event));
  }

  now(): number {
    return performance.now();
  }

  private fillGray(): void {
    this.ctx.fillStyle = `rgb(${MID_GRAY},${MID_GRAY},${MID_GRAY})`;
    this.ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
  }

  private sleep(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
  }

  async fixation(ms: number): Promise<void> {
    this.fillGray();
    const cx = this.canvas.width / 2;
    const cy = this.canvas.height / 2;
    this.ctx.fillStyle = "black";
    this.ctx.beginPath();
    this.ctx.arc(cx, cy, 4, 0, 2 * Math.PI);
    this.ctx.fill();
    await this.sleep(ms);
  }

  async blank(ms: number): Promise<void> {
    this.fillGray();
    await this.sleep(ms);
  }

  async playStack(stack: FrameStack, ms: number): Promise<void> {
    const { width, height } = stack;
    if (this.canvas.width !== width * this.scale) {
      this.canvas.width = width * this.scale;
      this.canvas.height = height * this.scale;
    }
    const offscreen = document.createElement("canvas");
    offscreen.width = width;
    offscreen.height = height;
    const offctx = offscreen.getContext("2d");
    if (!offctx) throw new Error("canvas 2d context unavailable");
    const image = offctx.createImageData(width, height);

    this.ctx.imageSmoothingEnabled = false;
    await new Promise<void>((resolve) => {
      let startTs: number | null = null;
      let lastIndex = -1;
      const draw = (ts: number) => {
        if (startTs === null) startTs = ts;
        const elapsed = ts - startTs;
        if (elapsed >= ms) {
          this.fillGray();
          resolve();
          return;
        }
        const index = frameIndexAt(elapsed, stack.fps, stack.nFrames);
        if (index !== lastIndex) {
          lastIndex = index;
          grayToRGBA(frameSlice(stack, index), image.data);
          offctx.putImageData(image, 0, 0);
          this.ctx.drawImage(
            offscreen,
            0,
            0,
            this.canvas.width,
            this.canvas.height,
          );
        }
        requestAnimationFrame(draw);
      };
      requestAnimationFrame(draw);
    });
  }

  awaitChoice(): Promise<{ choice: Choice; atMs: number }> {
    this.fillGray();
    return new Promise((resolve) => {
      this.keyResolver = resolve;
    });
  }

  private onKey(event: KeyboardEvent): void {
    // keys resolve a pending choice only; during all other phases no
    // resolver is armed and the press falls through
    if (!this.keyResolver) return;
    if (event.key !== "1" && event.key !== "2") return;
    const resolver = this.keyResolver;
    this.keyResolver = null;
    resolver({
      choice: event.key === "1" ? "first" : "second",
      atMs: performance.now(),
    });
  }
}
