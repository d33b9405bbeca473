"""Detector-guided caption decoding with CHAIR and POPE evaluation."""

import json

from groundguide._groundguide import (  # noqa: F401
    DEFAULT_GAMMA,
    DEFAULT_MAX_TOKENS,
    DEFAULT_QUERY,
    DEFAULT_SEED,
    BiasedFixture,
    Error,
    GenerationResult,
    TableModel,
    aggregate,
    blend_logits,
    bridge_generate,
    build_guidance_prompt,
    canonicalize,
    dynamic_gamma,
    extract_mentioned_objects,
    fill_query,
    make_biased_fixture,
    mean_confidence,
    parse_answer,
    render_judge_prompt,
    select_token,
    toy_generate,
)
from groundguide import _groundguide as _core


def score_chair(captions, annotations):
    """captions: [(image_id, text)], annotations: {image_id: {objects}}."""
    return json.loads(_core.score_chair(list(captions), dict(annotations)))


def build_pope_questions(annotations, setting="adversarial", per_image=6, seed=DEFAULT_SEED):
    return [json.loads(q) for q in _core.build_pope_questions(annotations, setting, per_image, seed)]


def score_pope(questions, answers):
    return json.loads(_core.score_pope([json.dumps(q) for q in questions], list(answers)))


__version__ = "0.1.0"
