"""Choice oracles: things that answer "where in this window is the query?".

Every oracle exposes ``choose(window, frames, query, options)`` and a
``concurrent_safe`` flag the harness consults before sharing an instance
across workers.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import httpx

from groundkit.engine import FramePlan, Representation, parse_answer
from groundkit.errors import ConfigError, MalformedAnswer, OracleFailure
from groundkit.prompts import PromptBank, default_bank, grounding_prompt
from groundkit.spans import CATEGORIES, Category, TimeSpan, categorize, require_positive


def truthful_choose(gt_span: TimeSpan, window: TimeSpan) -> Category:
    """The category a perfect answerer would give for ``gt_span`` seen through ``window``.

    The ground truth is clipped to the window first. If nothing of it is left,
    the answer points at the side where it lies.
    """
    require_positive(gt_span, window)
    clipped = gt_span.intersection(window)
    if clipped is not None:
        return categorize(clipped, window)
    if gt_span.end_s <= window.start_s:
        return Category.BEGINNING
    return Category.END


def noisy_choose(truthful: Category, epsilon: float, rng: random.Random) -> Category:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return rng.choice([c for c in CATEGORIES if c is not truthful])
    return truthful


class TruthfulOracle:
    concurrent_safe = True

    def __init__(self, gt_span: TimeSpan):
        self.gt_span = gt_span

    def choose(self, window, frames, query, options) -> Category:
        return truthful_choose(self.gt_span, window)


class NoisyOracle:
    """Truthful answers corrupted with probability ``epsilon``."""

    concurrent_safe = True

    def __init__(self, gt_span: TimeSpan, epsilon: float, seed: int = 0):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
        self.gt_span = gt_span
        self.epsilon = epsilon
        self._rng = random.Random(seed)

    def choose(self, window, frames, query, options) -> Category:
        return noisy_choose(truthful_choose(self.gt_span, window), self.epsilon, self._rng)


class ScriptedOracle:
    """Replays a fixed sequence of answers, one per round."""

    concurrent_safe = True

    def __init__(self, choices: Sequence[Category]):
        self._choices = list(choices)
        self._i = 0

    def choose(self, window, frames, query, options) -> Category:
        if self._i >= len(self._choices):
            raise OracleFailure("other", f"script exhausted after {len(self._choices)} answers")
        c = self._choices[self._i]
        self._i += 1
        return c


@dataclass(frozen=True)
class RemoteOracleConfig:
    endpoint: str
    timeout_ms: float = 30_000
    retries: int = 2
    prompt_template: str = "v1:0:0"
    concurrent_safe: bool = True

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be > 0")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        self.template_indices()

    def template_indices(self) -> tuple[str, int, int]:
        try:
            version, ins, q = self.prompt_template.split(":")
            return version, int(ins), int(q)
        except ValueError:
            raise ConfigError(
                f"prompt_template must look like 'v1:<instruction>:<question>', got {self.prompt_template!r}"
            ) from None

    @classmethod
    def from_env(cls, **overrides) -> RemoteOracleConfig:
        """Fill unset fields from GROUNDKIT_ENDPOINT / GROUNDKIT_TIMEOUT_MS / GROUNDKIT_RETRIES."""
        values = {k: v for k, v in overrides.items() if v is not None}
        env = os.environ
        if "endpoint" not in values:
            if "GROUNDKIT_ENDPOINT" not in env:
                raise ConfigError("remote oracle needs an endpoint (flag or GROUNDKIT_ENDPOINT)")
            values["endpoint"] = env["GROUNDKIT_ENDPOINT"]
        if "timeout_ms" not in values and "GROUNDKIT_TIMEOUT_MS" in env:
            values["timeout_ms"] = float(env["GROUNDKIT_TIMEOUT_MS"])
        if "retries" not in values and "GROUNDKIT_RETRIES" in env:
            values["retries"] = int(env["GROUNDKIT_RETRIES"])
        return cls(**values)


class RemoteOracle:
    """Asks an HTTP model service for the answer.

    Request body: ``{"prompt", "frames", "window", "options"}``; the service
    replies ``{"answer": "<text>"}``. Each failed attempt (timeout, connection
    problem, bad status, unreadable answer) uses up one retry.
    """

    def __init__(self, config: RemoteOracleConfig, bank: Optional[PromptBank] = None):
        self.config = config
        self.bank = bank or default_bank()
        version, self._ins, self._q = config.template_indices()
        if version != self.bank.version:
            raise ConfigError(f"template version {version} does not match bank {self.bank.version}")
        self.concurrent_safe = config.concurrent_safe
        self._client = httpx.Client(timeout=config.timeout_ms / 1000.0)
        self.attempts: list[str] = []

    def close(self) -> None:
        self._client.close()

    def request_body(self, window: TimeSpan, frames: FramePlan, query: str, options) -> dict:
        order = [c for _, c in options]
        prompt = grounding_prompt(
            self.bank,
            query,
            order,
            frames.relative(),
            random.Random(0),
            instruction_index=self._ins,
            question_index=self._q,
        )
        return {
            "prompt": prompt.prompt,
            "frames": list(frames.timestamps),
            "window": window.to_list(),
            "options": [[letter, c.value] for letter, c in options],
        }

    def choose(self, window, frames, query, options) -> Category:
        body = self.request_body(window, frames, query, options)
        last: Optional[OracleFailure] = None
        for _ in range(self.config.retries + 1):
            try:
                resp = self._client.post(self.config.endpoint, json=body)
                resp.raise_for_status()
                answer = resp.json()["answer"]
                choice = parse_answer(answer, Representation.COARSE, options=options)
                self.attempts.append("ok")
                return choice
            except httpx.TimeoutException as exc:
                last = OracleFailure("timeout", str(exc))
            except httpx.HTTPStatusError as exc:
                last = OracleFailure("http", str(exc))
            except httpx.TransportError as exc:
                last = OracleFailure("connection", str(exc))
            except (MalformedAnswer, ValueError, KeyError, TypeError) as exc:
                last = OracleFailure("malformed", str(exc))
            self.attempts.append(last.kind)
        raise last


def remote_choose(config: RemoteOracleConfig, window, frames, query, options) -> Category:
    oracle = RemoteOracle(config)
    try:
        return oracle.choose(window, frames, query, options)
    finally:
        oracle.close()
