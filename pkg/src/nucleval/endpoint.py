"""Segmenter endpoint protocol: newline-delimited JSON over a child process.

The harness writes one request line per image to the endpoint's stdin and
reads exactly one response line per request from its stdout, in order:

  request   {"image_id", "width", "height", "kind", "items", "image_path"}
  response  {"image_id", "candidates": [{"prompt_index", "score", "rle"}, ...]}
          | {"image_id"?, "error": "..."}

The response's image_id must echo the request's; a mismatch means the
stream ordering broke and the run must abort. An "error" response marks
that request failed but leaves the stream usable. Timeouts kill the child
(the stream can no longer be trusted) but are survivable by respawning.
"""
from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading

from .errors import EndpointError, DataError
from .labelio import parse_candidates_obj
from .prompts import CandidateMask, PromptSet

__all__ = ["EndpointClient", "build_request", "run_segmenter"]

DEFAULT_TIMEOUT = 120.0


def build_request(
    image_id: str,
    prompt_set: PromptSet,
    width: int,
    height: int,
    image_path: str | None = None,
) -> dict:
    return {
        "image_id": image_id,
        "width": int(width),
        "height": int(height),
        "kind": prompt_set.kind,
        "items": prompt_set.items(),
        "image_path": image_path,
    }


class EndpointClient:
    """One endpoint child process, queried one request at a time."""

    def __init__(self, cmd: str, timeout: float = DEFAULT_TIMEOUT):
        self.cmd = cmd
        self.timeout = timeout
        argv = shlex.split(cmd)
        if not argv:
            raise EndpointError("empty endpoint command", fatal=True)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise EndpointError(f"cannot spawn endpoint {cmd!r}: {e}", fatal=True) from e
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_stdout, daemon=True)
        self._reader.start()
        self._dead = False

    def _read_stdout(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)  # EOF sentinel

    @property
    def alive(self) -> bool:
        return not self._dead and self._proc.poll() is None

    def query(self, request: dict) -> list[CandidateMask]:
        """Send one request, await its validated response."""
        if self._dead:
            raise EndpointError("endpoint client is closed", fatal=True)
        line = json.dumps(request, separators=(",", ":"))
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            self._dead = True
            raise EndpointError(f"endpoint pipe closed: {e}", fatal=True) from e

        try:
            raw = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise EndpointError(
                f"endpoint response timed out after {self.timeout}s "
                f"(image {request.get('image_id')!r})",
                client_dead=True,
            ) from None
        if raw is None:
            self._dead = True
            rc = self._proc.wait()
            raise EndpointError(f"endpoint exited mid-stream (exit code {rc})", fatal=True)

        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise EndpointError(f"malformed endpoint response: {e}") from e
        if not isinstance(obj, dict):
            raise EndpointError(f"endpoint response is not an object: {raw[:200]!r}")
        if "error" in obj:
            raise EndpointError(f"endpoint reported an error: {obj['error']}")
        echoed = obj.get("image_id")
        if echoed != request["image_id"]:
            self._dead = True
            raise EndpointError(
                f"response order violated: got image {echoed!r}, expected {request['image_id']!r}",
                fatal=True,
            )
        try:
            return parse_candidates_obj(
                obj,
                n_prompts=len(request["items"]),
                size=(request["height"], request["width"]),
                where=f"response for {request['image_id']!r}",
            )
        except DataError as e:
            raise EndpointError(str(e)) from e

    def close(self) -> None:
        if self._dead and self._proc.poll() is not None:
            return
        self._dead = True
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self) -> "EndpointClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def run_segmenter(endpoint_cmd: str, requests, timeout: float = DEFAULT_TIMEOUT):
    """Stream requests through one endpoint process.

    Yields (image_id, candidates) per request, in request order; raises
    EndpointError on crash, timeout, schema violation, or broken ordering.
    """
    with EndpointClient(endpoint_cmd, timeout=timeout) as client:
        for request in requests:
            yield request["image_id"], client.query(request)
