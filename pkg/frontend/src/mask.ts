/**
 * Fuzzy confidence masks and spray-stroke compositing.
 *
 * This mirrors the pipeline's core compositor operation for operation:
 * the same window bounds, the same exactly-rounded IEEE arithmetic
 * (sqrt of a sum of squares, never hypot), max/min compositing and
 * floor(c*255 + 0.5) quantization. A stroke log replayed here and on
 * the backend must produce identical 8-bit masks.
 */

export type Falloff = "hard" | "linear" | "gaussian";

export interface StrokeRecord {
    path: [number, number][];
    radius: number;
    intensity: number;
    falloff: Falloff;
    erase?: boolean;
}

export class FuzzyMask {
    readonly width: number;
    readonly height: number;
    readonly confidence: Float64Array;

    constructor(width: number, height: number, confidence?: Float64Array) {
        if (width <= 0 || height <= 0) throw new Error("mask dimensions must be positive");
        if (confidence !== undefined && confidence.length !== width * height) {
            throw new Error("confidence length does not match dimensions");
        }
        this.width = width;
        this.height = height;
        this.confidence = confidence ?? new Float64Array(width * height);
    }

    clone(): FuzzyMask {
        return new FuzzyMask(this.width, this.height, this.confidence.slice());
    }

    at(x: number, y: number): number {
        return this.confidence[y * this.width + x];
    }
}

function falloffWeight(dist: number, radius: number, falloff: Falloff): number {
    switch (falloff) {
        case "hard":
            return 1.0;
        case "linear":
            return 1.0 - dist / radius;
        case "gaussian": {
            // sigma = radius / 2, truncated at the stroke radius
            const u = dist / radius;
            return Math.exp(-2.0 * u * u);
        }
    }
}

function checkStrokeArgs(mask: FuzzyMask, path: [number, number][], radius: number, intensity: number): void {
    if (path.length === 0) throw new Error("stroke path is empty");
    if (radius < 1) throw new Error("stroke radius must be >= 1 pixel");
    if (!(intensity >= 0 && intensity <= 1)) throw new Error("stroke intensity must be in [0, 1]");
    for (const [x, y] of path) {
        if (!(x >= 0 && x <= mask.width - 1 && y >= 0 && y <= mask.height - 1)) {
            throw new Error(`stroke point (${x}, ${y}) outside the mask grid`);
        }
    }
}

/** Distance from pixel center (px, py) to the stroke polyline. */
function pathDistance(px: number, py: number, path: [number, number][]): number {
    if (path.length === 1) {
        const dx = px - path[0][0];
        const dy = py - path[0][1];
        return Math.sqrt(dx * dx + dy * dy);
    }
    let dist = Infinity;
    for (let i = 0; i + 1 < path.length; i++) {
        const [ax, ay] = path[i];
        const [bx, by] = path[i + 1];
        const abx = bx - ax;
        const aby = by - ay;
        const denom = abx * abx + aby * aby;
        let dx: number;
        let dy: number;
        if (denom === 0) {
            dx = px - ax;
            dy = py - ay;
        } else {
            let t = ((px - ax) * abx + (py - ay) * aby) / denom;
            t = Math.min(Math.max(t, 0.0), 1.0);
            dx = px - (ax + t * abx);
            dy = py - (ay + t * aby);
        }
        dist = Math.min(dist, Math.sqrt(dx * dx + dy * dy));
    }
    return dist;
}

function composite(
    mask: FuzzyMask,
    path: [number, number][],
    radius: number,
    intensity: number,
    falloff: Falloff,
    erase: boolean,
): FuzzyMask {
    checkStrokeArgs(mask, path, radius, intensity);
    const out = mask.clone();
    let minX = Infinity;
    let maxX = -Infinity;
    let minY = Infinity;
    let maxY = -Infinity;
    for (const [x, y] of path) {
        minX = Math.min(minX, x);
        maxX = Math.max(maxX, x);
        minY = Math.min(minY, y);
        maxY = Math.max(maxY, y);
    }
    const xLo = Math.max(0, Math.floor(minX - radius));
    const xHi = Math.min(mask.width - 1, Math.ceil(maxX + radius));
    const yLo = Math.max(0, Math.floor(minY - radius));
    const yHi = Math.min(mask.height - 1, Math.ceil(maxY + radius));
    for (let y = yLo; y <= yHi; y++) {
        for (let x = xLo; x <= xHi; x++) {
            const d = pathDistance(x, y, path);
            if (d > radius) continue;
            const w = falloffWeight(d, radius, falloff);
            const idx = y * mask.width + x;
            if (erase) {
                out.confidence[idx] = Math.min(out.confidence[idx], 1.0 - intensity * w);
            } else {
                out.confidence[idx] = Math.max(out.confidence[idx], intensity * w);
            }
        }
    }
    return out;
}

export function sprayStroke(
    mask: FuzzyMask,
    path: [number, number][],
    radius: number,
    intensity: number,
    falloff: Falloff = "gaussian",
): FuzzyMask {
    return composite(mask, path, radius, intensity, falloff, false);
}

export function eraseStroke(
    mask: FuzzyMask,
    path: [number, number][],
    radius: number,
    intensity: number,
    falloff: Falloff = "gaussian",
): FuzzyMask {
    return composite(mask, path, radius, intensity, falloff, true);
}

export function replayStrokes(width: number, height: number, strokes: StrokeRecord[]): FuzzyMask {
    let mask = new FuzzyMask(width, height);
    for (const s of strokes) {
        mask = composite(mask, s.path, s.radius, s.intensity, s.falloff, s.erase === true);
    }
    return mask;
}

/** 8-bit levels: floor(c * 255 + 0.5), matching the stored mask format. */
export function quantize(mask: FuzzyMask): Uint8Array {
    const out = new Uint8Array(mask.width * mask.height);
    for (let i = 0; i < out.length; i++) {
        out[i] = Math.floor(mask.confidence[i] * 255.0 + 0.5);
    }
    return out;
}

export function dequantize(width: number, height: number, levels: Uint8Array): FuzzyMask {
    const conf = new Float64Array(levels.length);
    for (let i = 0; i < levels.length; i++) conf[i] = levels[i] / 255.0;
    return new FuzzyMask(width, height, conf);
}

// ---------------------------------------------------------------------------
// binary PGM (P5, maxval 255)
// ---------------------------------------------------------------------------

export function maskToPgm(mask: FuzzyMask): Uint8Array {
    const header = `P5\n${mask.width} ${mask.height}\n255\n`;
    const head = new TextEncoder().encode(header);
    const body = quantize(mask);
    const out = new Uint8Array(head.length + body.length);
    out.set(head, 0);
    out.set(body, head.length);
    return out;
}

export function pgmToMask(data: Uint8Array): FuzzyMask {
    let pos = 0;
    const isSpace = (b: number) => b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;
    const token = (): string => {
        while (pos < data.length) {
            if (isSpace(data[pos])) {
                pos++;
            } else if (data[pos] === 0x23) {
                while (pos < data.length && data[pos] !== 0x0a) pos++;
            } else {
                break;
            }
        }
        const start = pos;
        while (pos < data.length && !isSpace(data[pos])) pos++;
        return new TextDecoder().decode(data.subarray(start, pos));
    };
    if (token() !== "P5") throw new Error("not a binary PGM (P5) stream");
    const width = parseInt(token(), 10);
    const height = parseInt(token(), 10);
    const maxval = parseInt(token(), 10);
    if (!(width > 0 && height > 0)) throw new Error("malformed PGM dimensions");
    if (maxval !== 255) throw new Error(`expected 8-bit PGM, got maxval ${maxval}`);
    pos++; // single whitespace after maxval
    const body = data.subarray(pos, pos + width * height);
    if (body.length < width * height) throw new Error("truncated PGM body");
    return dequantize(width, height, body);
}
