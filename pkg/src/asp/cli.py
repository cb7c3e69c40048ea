"""Command line entry point: ``asp run|batch|render|scene|manifest|replay``."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict

import click
import numpy as np

from . import agent, nav
from .errors import ASPError
from .scene_map import ObjectMap, build_from_frame, integrate_keyframe
from .semantics import MockEmbeddingProvider
from .sim import NoiseConfig, SceneSpec, SimWorld, generate_scene, template_names
from .tools import ToolConfig, ToolLayer, manifest


def _load_scene(scene: str, seed: int) -> SceneSpec:
    if os.path.exists(scene):
        with open(scene, encoding="utf-8") as fh:
            return SceneSpec.loads(fh.read())
    if scene in template_names():
        return generate_scene(scene, seed)
    raise click.BadParameter(f"{scene!r} is neither a scene file nor a template "
                             f"({', '.join(template_names())})", param_hint="--scene")


def _load_noise(path: str | None) -> NoiseConfig:
    if path is None:
        return NoiseConfig()
    with open(path, encoding="utf-8") as fh:
        return NoiseConfig(**json.load(fh))


@click.group()
def main():
    """Agentic scene policies in a kinematic simulator."""


@main.command()
@click.option("--scene", required=True, help="Scene JSON file or template name.")
@click.option("--query", default=None, help="Override the task query sent to the agent.")
@click.option("--backend", type=click.Choice(["scripted", "external"]), default="scripted")
@click.option("--mode", type=click.Choice(["tabletop", "mobile"]), default=None,
              help="Expected scene mode (defaults to the scene's own).")
@click.option("--no-aff", is_flag=True, help="Whole-object ablation instead of affordances.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noise", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with NoiseConfig fields.")
@click.option("--budget", type=int, default=agent.DEFAULT_BUDGET, show_default=True)
@click.option("--log", "log_path", default=None, help="Write the JSONL episode log here ('-' for stdout).")
def run(scene, query, backend, mode, no_aff, seed, noise, budget, log_path):
    """Run one episode and print its score."""
    spec = _load_scene(scene, seed)
    if mode is not None and mode != spec.mode:
        raise click.BadParameter(f"scene is a {spec.mode} scene", param_hint="--mode")
    cfg = agent.EpisodeConfig(no_aff=no_aff, noise=_load_noise(noise), seed=seed, budget=budget)
    try:
        if backend == "scripted":
            policy = agent.ScriptedPolicy(agent.default_plan(spec.task, spec.mode))
        else:
            policy = agent.ExternalBackend.from_env()
        log = agent.run_episode(spec, policy, cfg, query=query)
    except ASPError as err:
        raise click.ClickException(str(err)) from err
    if log_path == "-":
        sys.stdout.write(log.to_jsonl())
        return
    if log_path:
        log.write(log_path)
    s = log.summary
    click.echo(f"score={s['score']:.2f} outcome={s['outcome']} steps={s['steps']} "
               f"remaps={s['remaps']}")


@main.command()
@click.option("--suite", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print rows as JSON instead of a table.")
def batch(suite, workers, as_json):
    """Run a suite of scripted episodes and print mean scores per task."""
    with open(suite, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        rows = agent.run_batch(agent.load_suite(doc), workers,
                               doc.get("budget", agent.DEFAULT_BUDGET))
    except ASPError as err:
        raise click.ClickException(str(err)) from err
    click.echo(json.dumps(rows, indent=2) if as_json else agent.format_table(rows))


def _top_down(world: SimWorld, pixel: float = 0.005) -> np.ndarray:
    clouds = [world.cloud(n) for n in world.visible_objects()]
    pts = np.vstack(clouds)
    lo = pts[:, :2].min(axis=0) - 0.05
    hi = pts[:, :2].max(axis=0) + 0.05
    w, h = (np.ceil((hi - lo) / pixel).astype(int) + 1)
    img = np.full((h, w), 255, dtype=np.uint8)
    for k, c in enumerate(clouds):
        shade = 40 + (k * 37) % 160
        cols = ((c[:, 0] - lo[0]) / pixel).astype(int)
        rows = ((c[:, 1] - lo[1]) / pixel).astype(int)
        img[rows, cols] = shade
    return img[::-1]


def _scene_map(world: SimWorld, spec: SceneSpec) -> ObjectMap:
    emb = MockEmbeddingProvider()
    if spec.mode == "tabletop":
        return build_from_frame(world.render(world.home_camera()), emb)
    m = ObjectMap()
    for cam in world.keyframe_cameras():
        m = integrate_keyframe(m, world.render(cam), emb)
    return m


@main.command()
@click.option("--scene", required=True, help="Scene JSON file or template name.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--nav", "with_nav", is_flag=True,
              help="Also draw the navigation candidates for the task's first target.")
@click.option("--no-aff", is_flag=True, help="Plan the approach without affordances.")
@click.option("--out", default="scene", show_default=True, help="Output path prefix.")
def render(scene, seed, with_nav, no_aff, out):
    """Write a top-down PGM of the scene, its object map JSON and (--nav) a nav image."""
    spec = _load_scene(scene, seed)
    world = SimWorld(spec, seed=seed)
    written = [f"{out}.pgm", f"{out}.map.json"]
    if spec.mode == "mobile":
        img = nav.grid_image(spec.grid)
    else:
        img = _top_down(world)
    nav.write_pgm(written[0], img)
    with open(written[1], "w", encoding="utf-8") as fh:
        fh.write(_scene_map(world, spec).dumps())
    if with_nav:
        if spec.mode != "mobile":
            raise click.UsageError("--nav needs a mobile scene")
        layer = ToolLayer(world, agent.make_backends(agent.EpisodeConfig(), seed),
                          ToolConfig(mode="mobile", no_aff=no_aff))
        query, action = agent.approach_hint(spec.task)
        res = layer.call("object_retrieval", {"query": query})
        keys = res.extra.get("keys", [])
        if not keys:
            raise click.ClickException(f"could not ground {query!r}: {res.feedback_msg}")
        trace: list = []
        try:
            goal, p_aff, note = layer.plan_approach(keys[0], action, trace)
        except ASPError as err:
            raise click.ClickException(str(err)) from err
        nav.write_pgm(f"{out}.nav.pgm", nav.grid_image(spec.grid, trace, goal))
        written.append(f"{out}.nav.pgm")
        click.echo(f"goal={[round(v, 3) for v in goal.to_list()]} ({note})")
    for path in written:
        click.echo(path)


@main.command()
@click.option("--template", required=True, type=click.Choice(template_names()))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default="-", show_default=True, help="Output file ('-' for stdout).")
def scene(template, seed, out):
    """Generate a scene JSON file from a template."""
    text = generate_scene(template, seed).dumps()
    if out == "-":
        click.echo(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


@main.command("manifest")
@click.option("--mode", type=click.Choice(["tabletop", "mobile"]), default="tabletop")
def manifest_cmd(mode):
    """Print the tool manifest offered to agent backends."""
    click.echo(json.dumps(manifest(mode), indent=2))


@main.command("replay")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scene", default=None, help="Scene JSON file if the log is not from a template.")
def replay_cmd(log_path, scene):
    """Re-run a logged episode and check the new log is byte-identical."""
    log = agent.EpisodeLog.read(log_path)
    spec = None
    if scene is not None:
        with open(scene, encoding="utf-8") as fh:
            spec = SceneSpec.loads(fh.read())
    try:
        again = agent.replay(log, spec)
    except ASPError as err:
        raise click.ClickException(str(err)) from err
    with open(log_path, encoding="utf-8") as fh:
        original = fh.read()
    if again.to_jsonl() != original:
        raise click.ClickException("replayed log differs from the original")
    click.echo(f"identical ({len(again.calls)} calls, score {again.score:.2f})")


if __name__ == "__main__":  # pragma: no cover
    main()
