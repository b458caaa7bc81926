"""Newline-delimited JSON environment server over stdio or TCP.

Requests are one JSON object per line with a ``cmd`` of ``reset``, ``step``,
``describe`` or ``close``. Every request gets exactly one response line with
an ``ok`` flag; failures carry ``error`` and leave the session open.
"""

from __future__ import annotations

import json
import logging
import socketserver
import sys
from typing import IO

from .env import MoralityEnv
from .morality import DEFAULT_BETA
from .scenarios import ConfigError, chain_to_dict, load_chain, resolve_scenario
from .world import ActionKind, EpisodeFinishedError, observation_length

log = logging.getLogger(__name__)


class Session:
    """One environment instance driven by protocol requests."""

    def __init__(self, scenario: str = "SwitchStandard", chain: str | None = "Utility", variant=None,
                 beta=None, normalize_cost: bool = False):
        self.normalize_cost = normalize_cost
        self.env: MoralityEnv | None = None
        self.done = True
        self.started = False
        self.closed = False
        self._configure(scenario, chain, variant, beta)

    def _configure(self, scenario, chain, variant=None, beta=None):
        sc = resolve_scenario(scenario, variant)
        ch, ch_beta = load_chain(chain, sc) if chain is not None else (None, None)
        beta = beta if beta is not None else (ch_beta if ch_beta is not None else DEFAULT_BETA)
        self.env = MoralityEnv(sc, ch, beta=beta, normalize_cost=self.normalize_cost)
        self.started = False
        self.done = True

    def handle(self, req: dict) -> dict:
        cmd = req.get("cmd")
        if cmd == "reset":
            if any(k in req for k in ("scenario", "chain", "variant", "beta")):
                cur = self.env
                self._configure(
                    req.get("scenario", cur.scenario.name),
                    req.get("chain", chain_to_dict(cur.chain) if cur.chain is not None else None),
                    req.get("variant"),
                    req.get("beta"),
                )
            seed = req.get("seed", 0)
            if not isinstance(seed, int) or isinstance(seed, bool):
                return _err("seed must be an integer")
            obs, info = self.env.reset(seed)
            self.started, self.done = True, False
            return {"ok": True, "obs": obs, "info": {"t": info["t"], "state_digest": info["state_digest"]}}
        if cmd == "step":
            if not self.started:
                return _err("no episode in progress; send reset first")
            if self.done:
                return _err("episode finished; send reset")
            action = req.get("action")
            if not isinstance(action, str):
                return _err("action must be one of " + ", ".join(a.name for a in ActionKind))
            try:
                action = ActionKind.parse(action)
            except ValueError as e:
                return _err(str(e))
            obs, reward, terminated, truncated, info = self.env.step(action)
            self.done = terminated or truncated
            return {
                "ok": True, "obs": obs, "reward": reward, "terminated": terminated, "truncated": truncated,
                "info": {"t": info["t"], "norm_events": info["norm_events"], "cost": info["cost"],
                         "state_digest": info["state_digest"]},
            }
        if cmd == "describe":
            env = self.env
            return {
                "ok": True,
                "scenario": env.scenario.name,
                "chain": chain_to_dict(env.chain, env.beta) if env.chain is not None else None,
                "actions": [a.name for a in ActionKind],
                "observation_entities": list(env.scenario.observed_entities()),
                "observation_length": observation_length(env.scenario),
                "max_steps": env.scenario.reward.max_steps,
            }
        if cmd == "close":
            self.closed = True
            return {"ok": True}
        return _err(f"unknown cmd {cmd!r}")

    def handle_line(self, line: str) -> str:
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError("request must be a JSON object")
        except ValueError as e:
            return json.dumps(_err(f"malformed request: {e}"))
        try:
            resp = self.handle(req)
        except (ConfigError, ValueError, EpisodeFinishedError) as e:
            resp = _err(str(e))
        except Exception as e:  # keep the connection alive on engine faults
            log.exception("request failed")
            resp = _err(f"internal error: {e}")
        return json.dumps(resp)


def _err(msg: str) -> dict:
    return {"ok": False, "error": msg}


def serve_stream(session: Session, rfile: IO[str], wfile: IO[str]) -> None:
    for line in rfile:
        if not line.strip():
            continue
        wfile.write(session.handle_line(line) + "\n")
        wfile.flush()
        if session.closed:
            break


def serve_stdio(**session_kwargs) -> None:
    serve_stream(Session(**session_kwargs), sys.stdin, sys.stdout)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        session = Session(**self.server.session_kwargs)
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace")
            if not line.strip():
                continue
            self.wfile.write((session.handle_line(line) + "\n").encode("utf-8"))
            self.wfile.flush()
            if session.closed:
                break


class EnvServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, session_kwargs: dict | None = None):
        self.session_kwargs = session_kwargs or {}
        Session(**self.session_kwargs)  # fail fast on a bad scenario/chain
        super().__init__(address, _Handler)


def serve_tcp(port: int, host: str = "127.0.0.1", **session_kwargs) -> None:
    with EnvServer((host, port), session_kwargs) as srv:
        log.info("serving on %s:%d", host, srv.server_address[1])
        srv.serve_forever()
