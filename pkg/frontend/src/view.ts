/**
 * Viewport state for the editor canvas: zoom about a pointer anchor, pan,
 * overlay opacity and the server-side contrast-enhancement toggle.
 */

import { ClaheParams } from "./api.js";

export interface ViewState {
    zoom: number; // > 0, screen pixels per image pixel
    panX: number; // image coordinates of the viewport's top-left corner
    panY: number;
    overlayOpacity: number; // [0, 1]
    claheEnabled: boolean;
    claheParams: ClaheParams;
}

export const MIN_ZOOM = 0.05;
export const MAX_ZOOM = 64;

export function initialView(): ViewState {
    return {
        zoom: 1,
        panX: 0,
        panY: 0,
        overlayOpacity: 0.5,
        claheEnabled: false,
        claheParams: { tiles_x: 8, tiles_y: 8, clip_limit: 4.0, bins: 256 },
    };
}

export function screenToImage(view: ViewState, sx: number, sy: number): [number, number] {
    return [view.panX + sx / view.zoom, view.panY + sy / view.zoom];
}

export function imageToScreen(view: ViewState, ix: number, iy: number): [number, number] {
    return [(ix - view.panX) * view.zoom, (iy - view.panY) * view.zoom];
}

/** Zoom by a factor keeping the image point under (sx, sy) fixed. */
export function zoomAt(view: ViewState, factor: number, sx: number, sy: number): ViewState {
    const zoom = Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, view.zoom * factor));
    if (zoom === view.zoom) return view;
    const [ix, iy] = screenToImage(view, sx, sy);
    return { ...view, zoom, panX: ix - sx / zoom, panY: iy - sy / zoom };
}

export function panBy(view: ViewState, dxScreen: number, dyScreen: number): ViewState {
    return {
        ...view,
        panX: view.panX - dxScreen / view.zoom,
        panY: view.panY - dyScreen / view.zoom,
    };
}

export function withOpacity(view: ViewState, opacity: number): ViewState {
    return { ...view, overlayOpacity: Math.min(1, Math.max(0, opacity)) };
}

export function toggleClahe(view: ViewState): ViewState {
    return { ...view, claheEnabled: !view.claheEnabled };
}
