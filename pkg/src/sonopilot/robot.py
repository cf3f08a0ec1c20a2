"""Deterministic simulated ultrasound robot.

The robot is a precondition-enforcing phase machine over the seven-step
procedure: camera init, model display, robot activation, scan, image
segmentation, report generation, report printing. Every call either
advances the phase along that order or fails with an explanatory
observation, leaving the state unchanged. Queued faults can regress the
phase (patient motion, probe slip) or fail a single call (api failure),
so recovery behaviour can be exercised.

``transition`` is a pure function: the same (state, call) pair always
produces the same successor state and a byte-identical observation.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

import numpy as np

from .errors import (
    InvalidInput,
    PositionOutOfRange,
    StaleScan,
    ThresholdOutOfRange,
)
from .toolcalls import ValidatedCall

SCAN_TARGETS = ("carotid", "spine", "rib")
IMAGE_SIZE = 64
BACKGROUND_INTENSITY = 0.2
REGION_INTENSITY = 0.8


class Phase(Enum):
    UNINITIALIZED = "Uninitialized"
    CAMERA_READY = "CameraReady"
    MODEL_DISPLAYED = "ModelDisplayed"
    ROBOT_ACTIVE = "RobotActive"
    SCANNED = "Scanned"
    SEGMENTED = "Segmented"
    REPORT_GENERATED = "ReportGenerated"
    REPORT_PRINTED = "ReportPrinted"


PHASE_ORDER = tuple(Phase)


def phase_index(phase: Phase) -> int:
    return PHASE_ORDER.index(phase)


# api name -> (required phase, resulting phase)
TRANSITIONS: dict[str, tuple[Phase, Phase]] = {
    "Init_Depth_Camera": (Phase.UNINITIALIZED, Phase.CAMERA_READY),
    "Display_Artery_Model": (Phase.CAMERA_READY, Phase.MODEL_DISPLAYED),
    "Activate_Robot": (Phase.MODEL_DISPLAYED, Phase.ROBOT_ACTIVE),
    "Start_Scan": (Phase.ROBOT_ACTIVE, Phase.SCANNED),
    "Image_Seg": (Phase.SCANNED, Phase.SEGMENTED),
    "Generate_Report": (Phase.SEGMENTED, Phase.REPORT_GENERATED),
    "Print_Report": (Phase.REPORT_GENERATED, Phase.REPORT_PRINTED),
}

GOLDEN_SEQUENCE = tuple(TRANSITIONS)

# phase -> the API whose success produces it (Uninitialized has none)
PHASE_PRODUCER: dict[Phase, str] = {nxt: api for api, (_, nxt) in TRANSITIONS.items()}

_OK_MESSAGES = {
    "Init_Depth_Camera": "Depth camera initialized.",
    "Display_Artery_Model": "Anatomical model displayed.",
    "Activate_Robot": "Robotic system active.",
    "Generate_Report": "Report generated.",
    "Print_Report": "Report printed; procedure finished.",
}


@dataclass(frozen=True)
class ScanImage:
    width: int
    height: int
    intensities: np.ndarray = field(repr=False)  # (height, width) floats in [0, 1]
    target_mask: np.ndarray = field(repr=False)  # (height, width) booleans

    def __post_init__(self):
        self.intensities.flags.writeable = False
        self.target_mask.flags.writeable = False


@dataclass(frozen=True)
class SegmentationResult:
    region: frozenset[tuple[int, int]]  # (row, col) pixels, 4-connected, contains the seed
    area_fraction: float
    hit: bool  # region covers at least half of the target mask


@dataclass(frozen=True)
class FaultSpec:
    """Queued environment fault.

    Exactly one trigger must be set: ``after_invocations`` fires once the
    robot's attempt counter reaches that value, ``on_api`` fires on the next
    call to the named API. ``patient_motion`` and ``probe_slip`` regress the
    phase to RobotActive and drop the scan; ``api_failure`` makes one
    matching call fail without touching the state.
    """

    kind: str  # patient_motion | probe_slip | api_failure
    after_invocations: int | None = None
    on_api: str | None = None

    def __post_init__(self):
        if self.kind not in ("patient_motion", "probe_slip", "api_failure"):
            raise InvalidInput(f"unknown fault kind {self.kind!r}")
        if (self.after_invocations is None) == (self.on_api is None):
            raise InvalidInput("exactly one of after_invocations / on_api must be set")
        if self.after_invocations is not None and self.after_invocations < 1:
            raise InvalidInput("after_invocations must be >= 1")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.after_invocations is not None:
            d["after_invocations"] = self.after_invocations
        if self.on_api is not None:
            d["on_api"] = self.on_api
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FaultSpec":
        return cls(
            kind=d.get("kind", ""),
            after_invocations=d.get("after_invocations"),
            on_api=d.get("on_api"),
        )


@dataclass(frozen=True)
class RobotState:
    phase: Phase = Phase.UNINITIALIZED
    scan_target: str | None = None
    scan: ScanImage | None = None
    segmentation: SegmentationResult | None = None
    fault_flags: frozenset[str] = frozenset()
    rng_seed: int = 0
    invocations: int = 0  # total invoke attempts, successful or not
    pending_faults: tuple[FaultSpec, ...] = ()


@dataclass(frozen=True)
class Observation:
    ok: bool
    api_name: str
    message: str
    state_after: Phase
    data: dict[str, Any] | None = None

    def render(self) -> str:
        """Stable one-line form fed back into the conversation."""
        status = "OK" if self.ok else "ERROR"
        return f"{status} {self.api_name}: {self.message}"

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "api_name": self.api_name,
            "message": self.message,
            "state_after": self.state_after.value,
            "data": self.data,
        }


def initial_state(seed: int = 0) -> RobotState:
    return RobotState(rng_seed=seed)


def make_scan_image(seed: int, target: str) -> ScanImage:
    """Synthesize a 64x64 piecewise-constant scan.

    Background intensity 0.2 with one bright (0.8) region whose shape
    depends on the target: an ellipse (carotid), a vertical band (spine),
    or an arc (rib). The region position is jittered by the seed; its mask
    is a single 4-connected component covering 2-15% of the image.
    """
    if target not in SCAN_TARGETS:
        raise InvalidInput(f"unknown scan target {target!r}")
    rng = np.random.default_rng((seed, SCAN_TARGETS.index(target)))
    h = w = IMAGE_SIZE
    ys, xs = np.mgrid[0:h, 0:w]
    if target == "carotid":
        cx = 32 + int(rng.integers(-6, 7))
        cy = 32 + int(rng.integers(-6, 7))
        a = 8 + int(rng.integers(-1, 2))
        b = 5 + int(rng.integers(0, 2))
        mask = ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0
    elif target == "spine":
        cx = 32 + int(rng.integers(-6, 7))
        cy = 32 + int(rng.integers(-4, 5))
        half_w = 3
        half_h = 17 + int(rng.integers(-2, 3))
        mask = (np.abs(xs - cx) <= half_w) & (np.abs(ys - cy) <= half_h)
    else:  # rib
        cx = 32 + int(rng.integers(-4, 5))
        cy = 24 + int(rng.integers(-4, 5))
        dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
        angle = np.degrees(np.arctan2(xs - cx, ys - cy))  # 0 points straight down
        mask = (dist >= 13.0) & (dist <= 18.0) & (np.abs(angle) <= 65.0)
    intensities = np.full((h, w), BACKGROUND_INTENSITY, dtype=np.float64)
    intensities[mask] = REGION_INTENSITY
    return ScanImage(width=w, height=h, intensities=intensities, target_mask=mask)


def _round_half_down(value: float) -> int:
    return math.ceil(value - 0.5)


def seed_pixel(image: ScanImage, position: tuple[float, float]) -> tuple[int, int]:
    """Map normalized (x, y) in [0,1]^2 to a (row, col) pixel, halves rounding down."""
    x, y = position
    col = _round_half_down(float(x) * (image.width - 1))
    row = _round_half_down(float(y) * (image.height - 1))
    return row, col


def segment(
    image: ScanImage,
    position: tuple[float, float],
    threshold: float,
) -> SegmentationResult:
    """Seeded 4-connected flood fill with an intensity tolerance.

    Grows from the seed pixel over pixels whose intensity differs from the
    seed's by at most ``threshold``. ``hit`` is true when the region covers
    at least half of the ground-truth target mask.
    """
    x, y = float(position[0]), float(position[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise PositionOutOfRange(f"position must lie in [0,1]x[0,1]; got ({x}, {y})")
    threshold = float(threshold)
    if not (0.0 <= threshold < 1.0):
        raise ThresholdOutOfRange(f"threshold must lie in [0, 1); got {threshold}")
    row0, col0 = seed_pixel(image, (x, y))
    grid = image.intensities
    seed_val = grid[row0, col0]
    match = np.abs(grid - seed_val) <= threshold
    visited = np.zeros_like(match, dtype=bool)
    visited[row0, col0] = True
    queue = deque([(row0, col0)])
    region: set[tuple[int, int]] = set()
    while queue:
        r, c = queue.popleft()
        region.add((r, c))
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < image.height and 0 <= nc < image.width:
                if match[nr, nc] and not visited[nr, nc]:
                    visited[nr, nc] = True
                    queue.append((nr, nc))
    mask_count = int(image.target_mask.sum())
    overlap = sum(1 for (r, c) in region if image.target_mask[r, c])
    return SegmentationResult(
        region=frozenset(region),
        area_fraction=len(region) / (image.width * image.height),
        hit=mask_count > 0 and overlap >= 0.5 * mask_count,
    )


def inject_fault(state: RobotState, fault: FaultSpec) -> RobotState:
    """Queue a fault; queued faults fire in injection order."""
    return replace(state, pending_faults=state.pending_faults + (fault,))


def _motion_regress(state: RobotState) -> RobotState:
    phase = state.phase
    if phase_index(phase) > phase_index(Phase.ROBOT_ACTIVE):
        phase = Phase.ROBOT_ACTIVE
    return replace(state, phase=phase, scan=None, segmentation=None)


def _fail(state: RobotState, api: str, message: str) -> tuple[RobotState, Observation]:
    state = replace(state, invocations=state.invocations + 1)
    state, note = _fire_motion_faults(state, api)
    obs = Observation(
        ok=False, api_name=api, message=message + note, state_after=state.phase
    )
    return state, obs


def _fire_motion_faults(state: RobotState, api: str) -> tuple[RobotState, str]:
    """Fire all matured motion faults in queue order; returns a message note."""
    notes: list[str] = []
    remaining: list[FaultSpec] = []
    for fault in state.pending_faults:
        if fault.kind == "api_failure":
            remaining.append(fault)
            continue
        matured = (
            fault.after_invocations is not None
            and state.invocations >= fault.after_invocations
        ) or fault.on_api == api
        if not matured:
            remaining.append(fault)
            continue
        state = _motion_regress(state)
        state = replace(state, fault_flags=state.fault_flags | {fault.kind})
        if fault.kind == "patient_motion":
            notes.append(" Patient motion detected; scan invalidated; phase regressed to RobotActive.")
        else:
            notes.append(" Probe slipped; scan invalidated; phase regressed to RobotActive.")
    state = replace(state, pending_faults=tuple(remaining))
    return state, "".join(notes)


def _pop_api_failure(state: RobotState, api: str) -> tuple[RobotState, FaultSpec | None]:
    for i, fault in enumerate(state.pending_faults):
        if fault.kind != "api_failure":
            continue
        matched = fault.on_api == api or (
            fault.after_invocations is not None
            and state.invocations >= fault.after_invocations
        )
        if matched:
            pending = state.pending_faults[:i] + state.pending_faults[i + 1 :]
            state = replace(
                state,
                pending_faults=pending,
                fault_flags=state.fault_flags | {f"api_failure:{api}"},
            )
            return state, fault
    return state, None


def transition(state: RobotState, call: ValidatedCall) -> tuple[RobotState, Observation]:
    """Apply one validated call; pure, deterministic, never raises."""
    api = call.spec.name
    if api not in TRANSITIONS:
        return _fail(state, api, f"UnknownApi: the robot does not implement {api}.")
    state, injected = _pop_api_failure(state, api)
    if injected is not None:
        return _fail(state, api, f"InjectedFailure: {api} failed due to an injected fault; state unchanged.")
    required, nxt = TRANSITIONS[api]
    if state.phase != required:
        producer = PHASE_PRODUCER.get(required)
        prereq = producer if producer is not None else "none (reset required)"
        return _fail(
            state,
            api,
            f"PreconditionError: {api} requires phase {required.value}; "
            f"current phase {state.phase.value}; missing prerequisite: {prereq}.",
        )
    data: dict[str, Any] | None = None
    if api == "Start_Scan":
        target = call.arguments["target"]
        scan = make_scan_image(state.rng_seed, target)
        state = replace(state, phase=nxt, scan_target=target, scan=scan, segmentation=None)
        message = f"Scan of the {target} region acquired ({scan.width}x{scan.height})."
        data = {"target": target, "width": scan.width, "height": scan.height}
    elif api == "Image_Seg":
        if state.scan is None:
            return _fail(
                state,
                api,
                "StaleScan: the scan was invalidated; missing prerequisite: Start_Scan.",
            )
        try:
            result = segment(state.scan, call.arguments["position"], call.arguments["threshold"])
        except PositionOutOfRange as exc:
            return _fail(state, api, f"PositionOutOfRange: {exc}.")
        except ThresholdOutOfRange as exc:
            return _fail(state, api, f"ThresholdOutOfRange: {exc}.")
        except StaleScan as exc:  # defensive; scan checked above
            return _fail(state, api, f"StaleScan: {exc}.")
        state = replace(state, phase=nxt, segmentation=result)
        message = (
            f"Segmentation finished: area_fraction={result.area_fraction:.4f}, "
            f"hit={'true' if result.hit else 'false'}."
        )
        data = {"area_fraction": result.area_fraction, "hit": result.hit}
    else:
        state = replace(state, phase=nxt)
        message = _OK_MESSAGES[api]
    state = replace(state, invocations=state.invocations + 1)
    state, note = _fire_motion_faults(state, api)
    return state, Observation(
        ok=True, api_name=api, message=message + note, state_after=state.phase, data=data
    )


class UltrasoundRobot:
    """Mutable wrapper owned by a single session; serializes invocations."""

    def __init__(self, seed: int = 0):
        self._state = initial_state(seed)

    @property
    def state(self) -> RobotState:
        return self._state

    def invoke(self, call: ValidatedCall) -> Observation:
        self._state, obs = transition(self._state, call)
        return obs

    def inject_fault(self, fault: FaultSpec) -> None:
        self._state = inject_fault(self._state, fault)

    def reset(self, seed: int | None = None) -> None:
        self._state = initial_state(self._state.rng_seed if seed is None else seed)


def state_snapshot(state: RobotState) -> dict:
    """JSON-friendly snapshot for the console and transcript exports."""
    seg = None
    if state.segmentation is not None:
        seg = {
            "area_fraction": state.segmentation.area_fraction,
            "hit": state.segmentation.hit,
            "region_size": len(state.segmentation.region),
        }
    return {
        "phase": state.phase.value,
        "scan_target": state.scan_target,
        "has_scan": state.scan is not None,
        "segmentation": seg,
        "fault_flags": sorted(state.fault_flags),
        "invocations": state.invocations,
        "pending_faults": [f.to_dict() for f in state.pending_faults],
    }


def state_snapshot_json(state: RobotState) -> str:
    return json.dumps(state_snapshot(state), sort_keys=True)


def scan_to_pgm(image: ScanImage) -> str:
    """Plain (P2) PGM dump of the intensity grid, for debugging."""
    lines = ["P2", f"{image.width} {image.height}", "255"]
    for row in image.intensities:
        lines.append(" ".join(str(int(round(v * 255))) for v in row))
    return "\n".join(lines) + "\n"
