/* tslint:disable */
/* eslint-disable */

/**
 * Frontier flags for the trade-off points in a CSV with columns
 * `k,d,m,b,clip,local_flops,mean_payload_bytes,top1_accuracy`.
 */
export function frontier(csv: string): string;

/**
 * Number of images in the embedded dataset.
 */
export function image_count(): number;

/**
 * The image as row-major pixel values in [0, 1].
 */
export function image_pixels(index: number): Float32Array;

/**
 * Per-layer cost table of the embedded model.
 */
export function profile(): string;

/**
 * Fits a codec at cut `k` on calibration images, then runs image `index`
 * through prefix, encode, decode and suffix.
 */
export function split_image(index: number, k: number, d: number, m: number, b: number, clip: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly frontier: (a: number, b: number) => [number, number, number, number];
    readonly image_count: () => number;
    readonly image_pixels: (a: number) => [number, number, number, number];
    readonly profile: () => [number, number, number, number];
    readonly split_image: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
