"""On-disk scene format and dataset generation.

One directory per scene:
  scene.json  — spec, per-person labels/visibility, face metadata
  audio.wav   — PCM16 mono 16 kHz mixture
  tracks.bin  — tensor container holding all face tracks [P, T, H, W, 1]
A dataset root holds train/ and val/ scene directories plus manifest.json
with per-scene and aggregate statistics.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .audio import load_wav, save_wav
from .checkpoint import load_tensors, save_tensors
from .errors import DataError
from .rng import STREAM_SCENE, make_rng
from .simulate import FACE_SIZE_WIDTHS, Scene, SceneSpec, generate_scene

MANIFEST_NAME = "manifest.json"


def _spec_to_json(spec: SceneSpec) -> dict:
    d = asdict(spec)
    d["snr_db"] = list(spec.snr_db)
    d["face_sizes"] = list(spec.face_sizes)
    return d


def _spec_from_json(d: dict) -> SceneSpec:
    d = dict(d)
    d["snr_db"] = tuple(d["snr_db"])
    d["face_sizes"] = tuple(d["face_sizes"])
    return SceneSpec(**d)


def write_scene(directory: str | Path, scene: Scene) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "spec": _spec_to_json(scene.spec),
        "speaking": scene.speaking.astype(int).tolist(),
        "visible": scene.visible.astype(int).tolist(),
        "labels": scene.labels.astype(int).tolist(),
        "face_widths": scene.face_widths.tolist(),
        "carrier_hz": scene.carrier_hz.tolist(),
        "syllabic_hz": scene.syllabic_hz.tolist(),
    }
    with open(directory / "scene.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    save_wav(directory / "audio.wav", scene.wave)
    save_tensors(directory / "tracks.bin", {"tracks": scene.tracks})


def read_scene(directory: str | Path) -> Scene:
    directory = Path(directory)
    meta_path = directory / "scene.json"
    if not meta_path.exists():
        raise DataError(f"{directory}: missing scene.json")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    spec = _spec_from_json(meta["spec"])
    tracks = load_tensors(directory / "tracks.bin")["tracks"]
    wave = load_wav(directory / "audio.wav")
    return Scene(
        spec=spec,
        tracks=tracks,
        wave=wave,
        speaking=np.array(meta["speaking"], dtype=bool),
        visible=np.array(meta["visible"], dtype=bool),
        labels=np.array(meta["labels"], dtype=np.int64),
        face_widths=np.array(meta["face_widths"], dtype=np.int64),
        carrier_hz=np.array(meta["carrier_hz"]),
        syllabic_hz=np.array(meta["syllabic_hz"]),
    )


def _scene_stats(scene: Scene) -> dict:
    return {
        "people": scene.num_people,
        "frames": scene.frames,
        "speaking_fraction": float(scene.speaking.mean()),
        "label_fraction": float(scene.labels.mean()),
        "face_widths": scene.face_widths.tolist(),
    }


def generate_dataset(root: str | Path, seed: int, n_train: int, n_val: int,
                     frames: int, crop_size: int,
                     people_range: tuple[int, int] = (2, 4),
                     overlap_prob: float = 0.1,
                     off_screen_prob: float = 0.05,
                     silence_prob: float = 0.15,
                     snr_db: tuple[float, float] = (8.0, 20.0),
                     turn_mean_frames: int = 12,
                     face_size_mix: tuple[float, float, float] = (0.25, 0.5, 0.25),
                     context_size: int = 3) -> dict:
    """Write n_train + n_val scenes and a manifest; returns the manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    mix = np.asarray(face_size_mix, dtype=np.float64)
    if mix.sum() <= 0:
        raise DataError("face_size_mix must have positive mass")
    mix = mix / mix.sum()
    class_order = ["small", "medium", "large"]

    manifest: dict = {
        "seed": seed,
        "generator": {
            "frames": frames, "crop_size": crop_size,
            "people_range": list(people_range),
            "overlap_prob": overlap_prob, "off_screen_prob": off_screen_prob,
            "silence_prob": silence_prob, "snr_db": list(snr_db),
            "turn_mean_frames": turn_mean_frames,
            "face_size_mix": [float(v) for v in mix],
        },
        "splits": {},
    }
    scene_counter = 0
    for split, count in (("train", n_train), ("val", n_val)):
        entries = []
        for i in range(count):
            scene_seed = seed * 1_000_003 + scene_counter
            rng = make_rng(seed, STREAM_SCENE, 100, scene_counter)
            people = int(rng.integers(people_range[0], people_range[1] + 1))
            sizes = tuple(str(c) for c in rng.choice(class_order, size=people, p=mix))
            spec = SceneSpec(
                seed=scene_seed, num_people=people, context_size=context_size,
                frames=frames, crop_size=crop_size, overlap_prob=overlap_prob,
                off_screen_prob=off_screen_prob, silence_prob=silence_prob,
                snr_db=snr_db, face_sizes=sizes, turn_mean_frames=turn_mean_frames,
            )
            scene = generate_scene(spec)
            scene_id = f"scene_{scene_counter:05d}"
            write_scene(root / split / scene_id, scene)
            entry = {"id": scene_id, "path": f"{split}/{scene_id}"}
            entry.update(_scene_stats(scene))
            entries.append(entry)
            scene_counter += 1
        manifest["splits"][split] = entries
    for split in ("train", "val"):
        entries = manifest["splits"][split]
        if entries:
            manifest[f"{split}_speaking_fraction"] = float(
                np.mean([e["speaking_fraction"] for e in entries]))
            manifest[f"{split}_label_fraction"] = float(
                np.mean([e["label_fraction"] for e in entries]))
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_split(root: str | Path, split: str) -> list[tuple[str, Scene]]:
    """Load every scene of a split as (scene_id, Scene), ordered by id."""
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataError(f"{root}: missing {MANIFEST_NAME}; not a dataset directory")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if split not in manifest["splits"]:
        raise DataError(f"{root}: split {split!r} not in manifest")
    out = []
    for entry in manifest["splits"][split]:
        out.append((entry["id"], read_scene(root / entry["path"])))
    return out
