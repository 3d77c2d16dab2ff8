/* tslint:disable */
/* eslint-disable */

/**
 * A 0.4 m cube released 1 m above a floor, simulated at resolution 32.
 */
export class DropDemo {
    free(): void;
    [Symbol.dispose](): void;
    floor(): number;
    /**
     * One rendered frame worth of substeps.
     */
    frame(): void;
    max_speed(): number;
    constructor(youngs_modulus: number, k: number, vx: number);
    /**
     * Side view: interleaved `x, y` per particle, in metres.
     */
    positions(): Float32Array;
    time(): number;
}

/**
 * Evaluates the curve with cubic and quadratic weights `a`, `b` at each `x`.
 */
export function applyTone(a: number, b: number, xs: Float64Array): Float64Array;

export function fitTone(rendered: Float64Array, observed: Float64Array): Float64Array;

/**
 * RGBA preview of a sphere casting onto a checker floor, seen from above.
 * `azimuth` and `elevation` are in degrees.
 */
export function shadow_preview(size: number, azimuth: number, elevation: number, ambient: number): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_dropdemo_free: (a: number, b: number) => void;
    readonly applyTone: (a: number, b: number, c: number, d: number) => [number, number];
    readonly dropdemo_floor: (a: number) => number;
    readonly dropdemo_frame: (a: number) => [number, number];
    readonly dropdemo_max_speed: (a: number) => number;
    readonly dropdemo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly dropdemo_positions: (a: number) => [number, number];
    readonly dropdemo_time: (a: number) => number;
    readonly fitTone: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly shadow_preview: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
