/* tslint:disable */
/* eslint-disable */

/**
 * A dissected synthetic bundle held in memory between calls.
 */
export class Dissection {
    free(): void;
    [Symbol.dispose](): void;
    layerCount(): number;
    /**
     * Top concepts and top images of one neuron.
     */
    neuronSvg(layer: number, neuron: number, top: number): string;
    /**
     * Generates a bundle from JSON options and labels every neuron.
     */
    constructor(options_json: string);
    /**
     * Per-layer thresholds, counts and neuron labels, plus planted-label recovery.
     */
    summary(): string;
    /**
     * Word cloud of the distinct labels of a layer's activated neurons.
     */
    wordcloudSvg(layer: number, seed: number): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_dissection_free: (a: number, b: number) => void;
    readonly dissection_layerCount: (a: number) => number;
    readonly dissection_neuronSvg: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly dissection_new: (a: number, b: number) => [number, number, number];
    readonly dissection_summary: (a: number) => [number, number, number, number];
    readonly dissection_wordcloudSvg: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
