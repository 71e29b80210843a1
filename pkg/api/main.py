from contextlib import asynccontextmanager
from typing import Any, Callable, Tuple

from fastapi import FastAPI, HTTPException

from common.models import (
    DifferentiateRequest,
    EvaluateRequest,
    EvaluateResponse,
    GradientRequest,
    GradientResponse,
    ModelEntry,
    SourceResponse,
)
from common.utils.config import config
from common.utils.diff_utils import (
    coerce_args,
    compute_gradient,
    derive_source,
    evaluate,
    find_function,
    run_in_pool,
)
from common.utils.logging import setup_logging
from difflang.errors import DiffLangError, UnknownModel
from difflang.lang.nodes import FuncDef, Program
from difflang.lang.parser import parse
from difflang.models import get_model, list_models


logger = setup_logging(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("Starting difflang API server")
    # warm the corpus so the first request does not pay for it
    try:
        for name in list_models():
            get_model(name)
        logger.info(f"Loaded {len(list_models())} corpus models")
    except Exception as e:
        logger.error(f"Failed to load corpus models: {e}")

    logger.info("API server started and ready for requests")
    yield

    logger.info("Shutting down API server")


app = FastAPI(title="difflang", lifespan=lifespan)


def _prepare(source: str, function: str) -> Tuple[Program, FuncDef]:
    program = parse(source)
    return program, find_function(program, function)


async def _run(fn: Callable[..., Any], *args: Any) -> Any:
    """Offload to the pool; difflang errors become 400 with a diagnostic."""
    try:
        return await run_in_pool(fn, *args)
    except DiffLangError as e:
        raise HTTPException(status_code=400, detail=e.diagnostic())
    except (TypeError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy", "models": len(list_models())}


@app.get("/models")
async def models():
    return [get_model(name).model_dump(exclude={"source"}) for name in list_models()]


@app.get("/models/{name}", response_model=ModelEntry)
async def model(name: str):
    try:
        return get_model(name)
    except UnknownModel as e:
        raise HTTPException(status_code=404, detail=e.message)


@app.post("/differentiate", response_model=SourceResponse)
async def differentiate(request: DifferentiateRequest):
    """Generated derivative (forward) or gradient (reverse) source."""
    program, func = await _run(_prepare, request.source, request.function)
    result = await _run(derive_source, program, func, request.wrt, request.mode)
    logger.info(f"Differentiated '{func.name}' wrt {request.wrt} ({request.mode})")
    return result


@app.post("/gradient", response_model=GradientResponse)
async def gradient(request: GradientRequest):
    program, func = await _run(_prepare, request.source, request.function)
    point = await _run(coerce_args, func, request.at)
    return await _run(compute_gradient, program, func, request.wrt or None, point, request.backend, request.eps)


@app.post("/evaluate", response_model=EvaluateResponse)
async def evaluate_function(request: EvaluateRequest):
    program, func = await _run(_prepare, request.source, request.function)
    point = await _run(coerce_args, func, request.args)
    return await _run(evaluate, program, func, point)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run("api.main:app", host=config["server"]["host"], port=config["server"]["port"], reload=True)
