/* tslint:disable */
/* eslint-disable */

/**
 * Three same-shape maps and a caption.
 */
export class Maps {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Map `k` (0 = input, then the components).
     */
    map(k: number): Float32Array;
    readonly bins: number;
    readonly caption: string;
    readonly count: number;
    readonly frames: number;
}

export function hpssScene(window_t: number, window_f: number, seed: number): Maps;

export function lossCurve(kind: string, alpha: number): Float64Array;

export function sdbdScene(window: number, seed: number): Maps;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_maps_free: (a: number, b: number) => void;
    readonly hpssScene: (a: number, b: number, c: number) => [number, number, number];
    readonly lossCurve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly maps_bins: (a: number) => number;
    readonly maps_caption: (a: number) => [number, number];
    readonly maps_count: (a: number) => number;
    readonly maps_frames: (a: number) => number;
    readonly maps_map: (a: number, b: number) => [number, number];
    readonly sdbdScene: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
