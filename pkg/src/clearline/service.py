"""HTTP service backing the annotation/review UI.

JSON everywhere except raw image and mask bytes. Errors map to HTTP
status: unknown resource 404, bad input 400, double-decide 409.
"""

from __future__ import annotations

import io

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from . import __version__
from .datastore import ConflictError, Datastore, NotFoundError
from .enhance import ClaheParams, clahe, clahe_rgb
from .masks import ImageGrid, mask_to_pgm, pgm_to_mask

_MEDIA_TYPES = {
    "png": "image/png",
    "jpeg": "image/jpeg",
    "jpg": "image/jpeg",
    "pgm": "image/x-portable-graymap",
    "ppm": "image/x-portable-pixmap",
    "bmp": "image/bmp",
}


class ClaheRequest(BaseModel):
    id: str
    params: dict = {}


class ReviewRequest(BaseModel):
    decision: str
    reviewer: str | None = None


def create_app(store: Datastore) -> FastAPI:
    app = FastAPI(title="clearline annotation service", version=__version__)
    # the annotation UI is typically served from a separate static-file port
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(NotFoundError)
    async def _not_found(request, exc):
        return JSONResponse(status_code=404, content={"error": "not-found", "message": str(exc)})

    @app.exception_handler(ConflictError)
    async def _conflict(request, exc):
        return JSONResponse(status_code=409, content={"error": "conflict", "message": str(exc)})

    @app.exception_handler(ValueError)
    async def _bad_request(request, exc):
        return JSONResponse(status_code=400, content={"error": "invalid-argument", "message": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/images")
    def list_images():
        return {"images": store.list_images()}

    @app.get("/images/{image_id}")
    def get_image(image_id: str):
        data, fmt = store.image_bytes(image_id)
        return Response(content=data, media_type=_MEDIA_TYPES.get(fmt, "application/octet-stream"))

    @app.get("/images/{image_id}/mask")
    def get_mask(image_id: str):
        mask = store.load_mask(image_id)
        if mask is None:
            # unannotated is a state, not an error
            return Response(status_code=204)
        return Response(content=mask_to_pgm(mask), media_type=_MEDIA_TYPES["pgm"])

    @app.put("/images/{image_id}/mask")
    async def put_mask(image_id: str, request: Request):
        body = await request.body()
        mask = pgm_to_mask(body)
        store.save_mask(image_id, mask)
        return {"status": "saved", "id": image_id, "width": mask.width, "height": mask.height}

    @app.get("/images/{image_id}/instances")
    def get_instances(image_id: str):
        rec = store.load_instances(image_id)
        if rec is None:
            return {"image_id": image_id, "instances": [], "annotator": None, "timestamp": None}
        return rec

    @app.put("/images/{image_id}/instances")
    async def put_instances(image_id: str, request: Request):
        record = await request.json()
        store.save_instances(image_id, record)
        return {"status": "saved", "id": image_id}

    @app.post("/enhance/clahe")
    def enhance_clahe(req: ClaheRequest):
        data, _fmt = store.image_bytes(req.id)
        params = ClaheParams(**req.params)
        with Image.open(io.BytesIO(data)) as im:
            if im.mode in ("L", "I;16", "I"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
                out = clahe(ImageGrid.from_array(arr), params).pixels
                preview = Image.fromarray(out, mode="L")
            else:
                arr = np.asarray(im.convert("RGB"))
                preview = Image.fromarray(clahe_rgb(arr, params), mode="RGB")
        buf = io.BytesIO()
        preview.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/review-queue")
    def review_queue(status: str | None = None):
        return {"entries": store.review_queue(status=status)}

    @app.post("/review-queue/{entry_id}")
    def review(entry_id: str, req: ReviewRequest):
        return store.review(entry_id, req.decision, reviewer=req.reviewer)

    return app


def serve(root, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(Datastore(root)), host=host, port=port)
