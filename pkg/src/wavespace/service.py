"""Real-time oscillator service around a trained decoder.

Three roles share the state: protocol handlers submit control messages,
one decode worker turns coalesced parameter changes into waveforms at a
capped rate, and one render loop reads the latest waveform through a
wait-free snapshot slot. Parameter state is last-writer-wins; decode
bursts collapse to the newest pending point.

Protocol ranges: descriptors in their extraction ranges ([0, 1], symmetry
[-pi, pi]), pad coordinates in [-8, 8], f0 in (0, 20000] Hz, envelope
times >= 0, sustain in [0, 1], gain in [0, 4].
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .descriptors import NAMES, DescriptorVector, extract
from .errors import ConfigError, DegenerateInputError, RangeError, ShapeError
from .model import ParamPoint
from .wavetable import PhaseState, Waveform, phase_indices, postprocess, read_block

PAD_RANGE = 8.0
MAX_F0 = 20000.0
MAX_GAIN = 4.0

MESSAGE_KINDS = ("set_style", "set_descriptor", "encode_init", "note", "envelope", "gain")


def descriptor_range(name: str) -> tuple[float, float]:
    return (-math.pi, math.pi) if name == "symmetry" else (0.0, 1.0)


# ---------------------------------------------------------------------------
# parameter state


@dataclass(frozen=True)
class Envelope:
    """Linear ADSR parameters, times in seconds."""

    attack: float = 0.01
    decay: float = 0.05
    sustain: float = 0.8
    release: float = 0.1

    def __post_init__(self):
        if min(self.attack, self.decay, self.release) < 0:
            raise RangeError("envelope times must be >= 0")
        if not 0.0 <= self.sustain <= 1.0:
            raise RangeError(f"sustain {self.sustain} outside [0, 1]")

    def as_dict(self) -> dict:
        return {"attack": self.attack, "decay": self.decay, "sustain": self.sustain, "release": self.release}


@dataclass(frozen=True)
class NoteState:
    f0: float = 220.0
    gate: bool = False

    def as_dict(self) -> dict:
        return {"f0": self.f0, "gate": self.gate}


@dataclass(frozen=True)
class OscState:
    """Control-side oscillator state.

    The live half (latest waveform snapshot, pending coalesced point,
    decode cap) sits on OscillatorService; this dataclass is the pure
    parameter state that messages fold into.
    """

    style_coords: np.ndarray
    descriptors: np.ndarray
    active_subspace: int = 0
    envelope: Envelope = field(default_factory=Envelope)
    note: NoteState = field(default_factory=NoteState)
    gain: float = 0.8

    def __post_init__(self):
        coords = np.asarray(self.style_coords, dtype=np.float64).reshape(-1).copy()
        coords.flags.writeable = False
        object.__setattr__(self, "style_coords", coords)
        desc = np.asarray(self.descriptors, dtype=np.float64).reshape(-1).copy()
        if desc.size != len(NAMES):
            raise ShapeError("descriptor state size mismatch", desc.shape, (len(NAMES),))
        desc.flags.writeable = False
        object.__setattr__(self, "descriptors", desc)

    def point(self) -> ParamPoint:
        return ParamPoint(
            style_coords=self.style_coords.copy(),
            descriptors=DescriptorVector.from_array(self.descriptors),
        )

    def as_dict(self) -> dict:
        return {
            "style_coords": self.style_coords.tolist(),
            "active_subspace": self.active_subspace,
            "descriptors": {name: float(v) for name, v in zip(NAMES, self.descriptors)},
            "envelope": self.envelope.as_dict(),
            "note": self.note.as_dict(),
            "gain": self.gain,
        }


def initial_state(num_styles: int) -> OscState:
    return OscState(
        style_coords=np.zeros(2 * num_styles),
        descriptors=np.array([0.5, 0.5, 0.5, 0.5, 0.0]),
    )


# ---------------------------------------------------------------------------
# control messages


@dataclass(frozen=True)
class ControlMessage:
    """One validated protocol message; unused fields stay None."""

    kind: str
    subspace: int | None = None
    x: float | None = None
    y: float | None = None
    name: str | None = None
    value: float | None = None
    samples: np.ndarray | None = None
    f0: float | None = None
    gate: bool | None = None
    envelope: Envelope | None = None


def _finite(obj: dict, key: str) -> float:
    try:
        value = float(obj[key])
    except KeyError:
        raise ConfigError(f"message is missing field {key!r}") from None
    except (TypeError, ValueError):
        raise ConfigError(f"field {key!r} must be a number") from None
    if not math.isfinite(value):
        raise RangeError(f"field {key!r} must be finite")
    return value


def parse_message(obj) -> ControlMessage:
    """Validate a raw message dict into a ControlMessage.

    Raises ConfigError for malformed structure and RangeError for values
    outside the protocol ranges; callers turn both into error replies.
    """
    if not isinstance(obj, dict):
        raise ConfigError("message must be a JSON object")
    kind = obj.get("type")
    if kind not in MESSAGE_KINDS:
        raise ConfigError(f"unknown message type {kind!r}; known: {list(MESSAGE_KINDS)}")

    if kind == "set_style":
        subspace = obj.get("subspace")
        if not isinstance(subspace, int) or subspace < 0:
            raise ConfigError("set_style needs a nonnegative integer subspace")
        x, y = _finite(obj, "x"), _finite(obj, "y")
        if abs(x) > PAD_RANGE or abs(y) > PAD_RANGE:
            raise RangeError(f"pad coordinates ({x}, {y}) outside [-{PAD_RANGE}, {PAD_RANGE}]")
        return ControlMessage(kind=kind, subspace=subspace, x=x, y=y)

    if kind == "set_descriptor":
        name = obj.get("name")
        if name not in NAMES:
            raise ConfigError(f"unknown descriptor {name!r}; known: {list(NAMES)}")
        value = _finite(obj, "value")
        lo, hi = descriptor_range(name)
        if not lo <= value <= hi:
            raise RangeError(f"{name} value {value} outside [{lo:.4g}, {hi:.4g}]")
        return ControlMessage(kind=kind, name=name, value=value)

    if kind == "encode_init":
        samples = obj.get("samples")
        if not isinstance(samples, (list, tuple, np.ndarray)):
            raise ConfigError("encode_init needs a samples array")
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ConfigError("encode_init samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise RangeError("encode_init samples must be finite")
        return ControlMessage(kind=kind, samples=arr)

    if kind == "note":
        f0 = _finite(obj, "f0")
        if not 0.0 < f0 <= MAX_F0:
            raise RangeError(f"f0 {f0} outside (0, {MAX_F0}]")
        gate = obj.get("gate")
        if not isinstance(gate, bool):
            raise ConfigError("note needs a boolean gate")
        return ControlMessage(kind=kind, f0=f0, gate=gate)

    if kind == "envelope":
        env = Envelope(
            attack=_finite(obj, "attack"),
            decay=_finite(obj, "decay"),
            sustain=_finite(obj, "sustain"),
            release=_finite(obj, "release"),
        )
        return ControlMessage(kind=kind, envelope=env)

    value = _finite(obj, "value")
    if not 0.0 <= value <= MAX_GAIN:
        raise RangeError(f"gain {value} outside [0, {MAX_GAIN}]")
    return ControlMessage(kind=kind, value=value)


def apply_message(state: OscState, msg: ControlMessage, num_subspaces: int):
    """Fold one message into the state; returns (state', decode_needed).

    A decode is needed only when the effective decoder inputs (style
    coordinates or descriptors) actually change; render-path parameters
    (note, envelope, gain) never trigger one.
    """
    if msg.kind == "set_style":
        if msg.subspace >= num_subspaces:
            raise RangeError(f"subspace {msg.subspace} outside [0, {num_subspaces})")
        coords = state.style_coords.copy()
        offset = 2 * msg.subspace
        changed = coords[offset] != msg.x or coords[offset + 1] != msg.y
        coords[offset] = msg.x
        coords[offset + 1] = msg.y
        return replace(state, style_coords=coords, active_subspace=msg.subspace), changed

    if msg.kind == "set_descriptor":
        index = NAMES.index(msg.name)
        changed = state.descriptors[index] != msg.value
        desc = state.descriptors.copy()
        desc[index] = msg.value
        return replace(state, descriptors=desc), changed

    if msg.kind == "note":
        return replace(state, note=NoteState(f0=msg.f0, gate=msg.gate)), False

    if msg.kind == "envelope":
        return replace(state, envelope=msg.envelope), False

    if msg.kind == "gain":
        return replace(state, gain=msg.value), False

    raise ConfigError(f"message kind {msg.kind!r} needs the service (not pure state)")


def encode_init(model, samples, state: OscState):
    """Replace the current point with the encoder's view of a waveform.

    The waveform must already have the model's input length; it is
    normalized, encoded to its posterior mean, and its descriptors are
    extracted. Always schedules a decode.
    """
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if arr.size != model.config.input_length:
        raise ShapeError("encode_init waveform length mismatch", arr.shape, (model.config.input_length,))
    waveform = postprocess(arr)
    mu, _ = model.encode(waveform)
    desc = extract(waveform)
    return replace(state, style_coords=mu, descriptors=desc.as_array()), True


# ---------------------------------------------------------------------------
# snapshot exchange


class Snapshot(NamedTuple):
    seq: int
    waveform: Waveform


class SnapshotSlot:
    """Single-producer single-consumer latest-wins handoff.

    The slot holds one immutable object; publishing rebinds the cell and
    reading returns whatever is currently bound. Under the interpreter's
    atomic attribute stores the consumer is wait-free, never allocates,
    and can never observe a partially written snapshot. Overwritten
    snapshots are simply dropped.
    """

    __slots__ = ("_cell",)

    def __init__(self):
        self._cell = None

    def publish(self, snapshot):
        self._cell = snapshot

    def read(self):
        return self._cell


# ---------------------------------------------------------------------------
# decode worker


class OscillatorService:
    """Owns the parameter state, the decode worker and the snapshot slot.

    Messages arrive via submit(); at most one decode runs at a time, at
    most max_exec_hz decode starts per second, and bursts coalesce to
    the newest point. Each completed decode publishes a snapshot and
    invokes on_frame(waveform, params_dict) from the worker thread.
    """

    def __init__(self, model, max_exec_hz: float = 30.0, on_frame=None):
        if max_exec_hz <= 0:
            raise RangeError(f"max_exec_hz must be positive, got {max_exec_hz}")
        self.model = model
        self.max_exec_hz = float(max_exec_hz)
        self.on_frame = on_frame
        self.slot = SnapshotSlot()
        self.decode_count = 0
        self._params = initial_state(model.config.num_styles)
        self._cond = threading.Condition()
        self._pending: ParamPoint | None = None
        self._busy = False
        self._closed = False
        self._seq = 0
        self._next_allowed = 0.0
        self.slot.publish(Snapshot(0, model.decode_point(self._params.point())))
        self._worker = threading.Thread(target=self._worker_loop, name="wavespace-decode", daemon=True)
        self._worker.start()

    # -- state access ---------------------------------------------------

    @property
    def params(self) -> OscState:
        return self._params

    @property
    def latest_waveform(self) -> Waveform:
        return self.slot.read().waveform

    @property
    def pending(self):
        return self._pending

    def submit(self, obj) -> dict | None:
        """Apply one raw message dict; returns an error frame dict or None."""
        try:
            msg = parse_message(obj)
            with self._cond:
                if msg.kind == "encode_init":
                    new_state, decode_needed = encode_init(self.model, msg.samples, self._params)
                else:
                    new_state, decode_needed = apply_message(msg=msg, state=self._params, num_subspaces=self.model.config.num_styles)
                self._params = new_state
                if decode_needed:
                    self._pending = new_state.point()
                    self._cond.notify_all()
        except (ConfigError, RangeError, ShapeError, DegenerateInputError) as exc:
            return {"type": "error", "message": str(exc)}
        return None

    def wait_idle(self, timeout: float = 5.0) -> bool:
        """Block until no decode is pending or running; False on timeout."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._pending is not None or self._busy:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
        return True

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        self._worker.join(timeout=5.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- worker ---------------------------------------------------------

    def _worker_loop(self):
        interval = 1.0 / self.max_exec_hz
        while True:
            with self._cond:
                while self._pending is None and not self._closed:
                    self._cond.wait()
                if self._closed:
                    return
            delay = self._next_allowed - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            with self._cond:
                if self._closed:
                    return
                point = self._pending
                self._pending = None
                if point is None:
                    continue
                self._busy = True
                params = self._params.as_dict()
            self._next_allowed = time.monotonic() + interval
            waveform = self.model.decode_point(point)
            self._seq += 1
            self.slot.publish(Snapshot(self._seq, waveform))
            self.decode_count += 1
            callback = self.on_frame
            with self._cond:
                self._busy = False
                self._cond.notify_all()
            if callback is not None:
                callback(waveform, params)


# ---------------------------------------------------------------------------
# render path


class RenderVoice:
    """Audio-side voice: phase accumulation, ADSR, gain, snapshot crossfade.

    render_block() reads the newest snapshot from the slot; when the
    snapshot changed since the previous block, old and new waveforms are
    crossfaded over exactly one block. Envelope and note changes take
    effect at block boundaries. The envelope emits its current level
    then advances, so a zero-attack gate reaches full level on the first
    sample and a zero-release gate-off is silent from the next block.
    """

    def __init__(self, slot: SnapshotSlot, sample_rate: float = 48000.0):
        self.slot = slot
        self.sample_rate = float(sample_rate)
        self.gate = False
        self.envelope = Envelope()
        self.gain = 0.8
        self._phase: PhaseState | None = None
        self._current: Snapshot | None = None
        self._stage = "idle"
        self._level = 0.0
        self._release_rate = 0.0

    def sync(self, state: OscState):
        """Adopt the render-side parameters of a control state."""
        self.gate = state.note.gate
        self.envelope = state.envelope
        self.gain = state.gain

    # -- envelope -------------------------------------------------------

    def _envelope_block(self, n: int) -> np.ndarray:
        env = np.empty(n)
        sr = self.sample_rate
        e = self.envelope
        if self.gate and self._stage in ("idle", "release"):
            self._stage = "attack"
        elif not self.gate and self._stage in ("attack", "decay", "sustain"):
            if e.release <= 0.0:
                self._stage = "idle"
                self._level = 0.0
            else:
                self._stage = "release"
                self._release_rate = self._level / (e.release * sr)

        i = 0
        while i < n:
            room = n - i
            if self._stage == "attack":
                if e.attack <= 0.0 or self._level >= 1.0:
                    self._level = 1.0
                    self._stage = "decay"
                    continue
                rate = 1.0 / (e.attack * sr)
                m = min(room, math.ceil((1.0 - self._level) / rate))
                env[i : i + m] = np.minimum(self._level + rate * np.arange(m), 1.0)
                self._level = min(self._level + rate * m, 1.0)
                if self._level >= 1.0:
                    self._stage = "decay"
            elif self._stage == "decay":
                if e.decay <= 0.0 or self._level <= e.sustain:
                    self._level = e.sustain
                    self._stage = "sustain"
                    continue
                rate = (1.0 - e.sustain) / (e.decay * sr)
                m = min(room, math.ceil((self._level - e.sustain) / rate))
                env[i : i + m] = np.maximum(self._level - rate * np.arange(m), e.sustain)
                self._level = max(self._level - rate * m, e.sustain)
                if self._level <= e.sustain:
                    self._stage = "sustain"
            elif self._stage == "sustain":
                self._level = e.sustain
                env[i:] = e.sustain
                m = room
            elif self._stage == "release":
                rate = self._release_rate
                if rate <= 0.0 or self._level <= 0.0:
                    self._stage = "idle"
                    self._level = 0.0
                    continue
                m = min(room, math.ceil(self._level / rate))
                env[i : i + m] = np.maximum(self._level - rate * np.arange(m), 0.0)
                self._level = max(self._level - rate * m, 0.0)
                if self._level <= 0.0:
                    self._stage = "idle"
            else:
                env[i:] = 0.0
                m = room
            i += m
        return env

    # -- audio ----------------------------------------------------------

    def _table_samples(self, waveform: Waveform, cols: np.ndarray) -> np.ndarray:
        table = waveform.samples[np.newaxis, :]
        return read_block(table, np.zeros(cols.size), cols)

    def render_block(self, f0: float, n: int) -> np.ndarray:
        """Render n samples at fundamental f0, honoring gate/envelope/gain."""
        if n < 1:
            raise RangeError(f"block length must be >= 1, got {n}")
        snap = self.slot.read()
        if snap is None:
            return np.zeros(n)
        if self._phase is None or self._phase.table_length != snap.waveform.length:
            self._phase = PhaseState(table_length=snap.waveform.length, sample_rate=self.sample_rate)
        cols = phase_indices(self._phase, np.full(n, float(f0)))
        out = self._table_samples(snap.waveform, cols)
        if self._current is not None and self._current.seq != snap.seq:
            old = self._table_samples(self._current.waveform, cols)
            weight = np.arange(1, n + 1) / n
            out = (1.0 - weight) * old + weight * out
        self._current = snap
        return out * self._envelope_block(n) * self.gain


def render_block(voice: RenderVoice, f0: float, n: int) -> np.ndarray:
    """Module-level alias for RenderVoice.render_block."""
    return voice.render_block(f0, n)


# ---------------------------------------------------------------------------
# wire protocol endpoint


def waveform_frame(waveform: Waveform, params: dict) -> dict:
    return {"type": "waveform", "samples": waveform.samples.tolist(), "params": params}


async def serve(model, host: str = "127.0.0.1", port: int = 8765, max_exec_hz: float = 30.0, started=None):
    """Run the JSON-over-WebSocket endpoint until cancelled.

    Inbound text frames are ControlMessages; every decode broadcasts one
    waveform frame to all connected clients; malformed input produces an
    error frame and keeps the connection open. `started`, if given, is
    an asyncio.Future resolved with (server, service) once listening.
    """
    import asyncio
    import json

    import websockets

    loop = asyncio.get_running_loop()
    clients: set = set()

    async def broadcast(payload: str):
        for ws in list(clients):
            try:
                await ws.send(payload)
            except Exception:
                clients.discard(ws)

    def on_frame(waveform, params):
        payload = json.dumps(waveform_frame(waveform, params))
        asyncio.run_coroutine_threadsafe(broadcast(payload), loop)

    service = OscillatorService(model, max_exec_hz=max_exec_hz, on_frame=on_frame)

    async def handler(ws):
        clients.add(ws)
        try:
            snap = service.slot.read()
            await ws.send(json.dumps(waveform_frame(snap.waveform, service.params.as_dict())))
            async for text in ws:
                try:
                    obj = json.loads(text)
                except json.JSONDecodeError:
                    await ws.send(json.dumps({"type": "error", "message": "malformed JSON"}))
                    continue
                error = service.submit(obj)
                if error is not None:
                    await ws.send(json.dumps(error))
        finally:
            clients.discard(ws)

    try:
        async with websockets.serve(handler, host, port) as server:
            if started is not None:
                started.set_result((server, service))
            await asyncio.Future()
    finally:
        service.close()
