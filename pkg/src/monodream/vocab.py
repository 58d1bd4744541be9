"""Closed vocabulary, tokenizer, action tokens and task prompt templates."""
from __future__ import annotations

import hashlib
from enum import Enum

from monodream.world import COLOR_NAMES, Action

WORDS = (
    ".", ",", ":",
    "a", "analyze", "and", "are", "assigned", "around", "been", "captured", "current", "decide",
    "depth", "describe", "forward", "given", "go", "have", "historical", "image", "images", "in", "is",
    "left", "move", "navigation", "next", "observation", "observations", "of", "panoramic",
    "predict", "right", "robot", "room", "sequence", "series", "stop", "task", "the",
    "this", "through", "to", "trajectory", "turn", "video", "you", "your",
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
) + COLOR_NAMES

IMAGE = "<image>"
EOS = "<eos>"
DREAM_SLOTS = ("<dream_left>", "<dream_front>", "<dream_right>", "<dream_back>")
ACTION_TOKENS = tuple(f"<{a.name.lower()}>" for a in Action)
SPECIALS = DREAM_SLOTS + (IMAGE, EOS)

TOKENS: tuple[str, ...] = WORDS + ACTION_TOKENS + SPECIALS
TOKEN_ID = {tok: i for i, tok in enumerate(TOKENS)}
VOCAB_SIZE = len(TOKENS)
IMAGE_ID = TOKEN_ID[IMAGE]
EOS_ID = TOKEN_ID[EOS]
DREAM_IDS = tuple(TOKEN_ID[t] for t in DREAM_SLOTS)
ACTION_BASE = TOKEN_ID[ACTION_TOKENS[0]]


class UnknownWord(KeyError):
    pass


def action_token(action: Action) -> int:
    return ACTION_BASE + int(action)


def token_action(token: int) -> Action | None:
    k = token - ACTION_BASE
    return Action(k) if 0 <= k < len(Action) else None


def tokenize(text: str) -> list[int]:
    words = text.replace(".", " . ").replace(",", " , ").replace(":", " : ").split()
    try:
        return [TOKEN_ID[w] for w in words]
    except KeyError as exc:
        raise UnknownWord(str(exc)) from None


def detokenize(tokens) -> str:
    text = " ".join(TOKENS[t] for t in tokens)
    return text.replace(" .", ".").replace(" ,", ",").replace(" :", ":")


class SampleKind(str, Enum):
    ACTION = "action"
    IR = "ir"
    PI = "pi"
    PD = "pd"
    FPI = "fpi"
    FPD = "fpd"

    @property
    def is_lpd(self) -> bool:
        return self in LPD_KINDS


LPD_KINDS = (SampleKind.PI, SampleKind.PD, SampleKind.FPI, SampleKind.FPD)

INSTRUCTION_SLOT = "[instruction]"
HISTORY_SLOT = "[history]"

_OBSERVE = (
    "you are a navigation robot. you have been given a video of historical observations: "
    "[history] and current observation: <image>."
)
_TEMPLATES = {
    SampleKind.ACTION: _OBSERVE + " your assigned task is: [instruction] analyze this series of images to "
    "decide your next move.",
    SampleKind.IR: "you are a navigation robot. you have captured image sequence: [history]. "
    "describe the navigation trajectory of the robot.",
    SampleKind.PI: _OBSERVE + " analyze the series of images to predict the panoramic image of current observation.",
    SampleKind.PD: _OBSERVE + " analyze the series of images to predict the panoramic depth of current observation.",
    SampleKind.FPI: _OBSERVE + " your assigned task is: [instruction] analyze the series of images to predict "
    "the panoramic image of current observation.",
    SampleKind.FPD: _OBSERVE + " your assigned task is: [instruction] analyze the series of images to predict "
    "the panoramic depth of current observation.",
}


def prompt_template(kind: SampleKind | str) -> str:
    return _TEMPLATES[SampleKind(kind)]


def prompt_for(kind: SampleKind | str, n_history: int = 8, instruction: str | None = None) -> list[int]:
    """Token ids of the task prompt with image placeholders and the instruction filled in."""
    template = prompt_template(kind)
    out: list[int] = []
    for piece in template.replace(HISTORY_SLOT, f" {HISTORY_SLOT} ").replace(
        INSTRUCTION_SLOT, f" {INSTRUCTION_SLOT} "
    ).split(" "):
        if not piece:
            continue
        if piece == HISTORY_SLOT:
            out.extend([IMAGE_ID] * n_history)
        elif piece == INSTRUCTION_SLOT:
            if instruction is None:
                raise ValueError(f"{SampleKind(kind).value} prompt needs an instruction")
            out.extend(tokenize(instruction))
        else:
            out.extend(tokenize(piece))
    return out


def template_hash(kind: SampleKind | str) -> str:
    return hashlib.sha256(prompt_template(kind).encode()).hexdigest()[:12]
