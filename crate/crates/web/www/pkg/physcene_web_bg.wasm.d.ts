/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_dropdemo_free: (a: number, b: number) => void;
export const applyTone: (a: number, b: number, c: number, d: number) => [number, number];
export const dropdemo_floor: (a: number) => number;
export const dropdemo_frame: (a: number) => [number, number];
export const dropdemo_max_speed: (a: number) => number;
export const dropdemo_new: (a: number, b: number, c: number) => [number, number, number];
export const dropdemo_positions: (a: number) => [number, number];
export const dropdemo_time: (a: number) => number;
export const fitTone: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const shadow_preview: (a: number, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
