"""Command-line driver: build, train, recommend, explain, simulate, report, serve.

All runs are described by a JSON manifest (paths, graph configuration,
training hyperparameters, study grid); command-line flags override manifest
fields.  The manifest is copied into the output directory so every artifact
set records its provenance.  Outputs are byte-identical across reruns on
unchanged inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .autoencoder import RatingVector, TrainConfig, UserAutoencoder
from .data import (Catalog, KgConfig, MODES, RatingsTable, build_feature_space,
                   load_item_mapping, load_ratings, load_triples, write_catalog,
                   write_features, write_mask)
from .errors import KgrecError
from .explain import STYLES, build_bundle, write_bundles
from .metrics import render_report, report_json
from .profiles import extract_profile, recommend, write_profile, write_recommendations
from .simulate import CohortModel, simulate_cohort
from .study import SessionStore, StudyConfig, StudyEngine

log = logging.getLogger(__name__)

MANIFEST_FIELDS = ("triples", "ratings", "mapping")


@dataclass
class Manifest:
    triples: str = ""
    triples_format: str = "ntriples"
    ratings: str = ""
    mapping: str = ""
    mode: str = "both"
    categorical_predicates: list[str] = field(default_factory=list)
    factual_predicates: list[str] = field(default_factory=list)
    epochs: int = 1000
    learning_rate: float = 0.03
    seed: int = 0
    top_n: int = 5
    k: int = 5
    styles: list[str] = field(default_factory=lambda: ["popularity", "non_personalized", "pairwise"])
    study_modes: list[str] = field(default_factory=lambda: list(MODES))
    min_select: int = 15
    candidate_sample: int = 30
    output_dir: str = "out"

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        with Path(path).open(encoding="utf-8") as fh:
            raw = json.load(fh)
        m = cls()
        for key, value in raw.items():
            if not hasattr(m, key):
                raise KgrecError(f"unknown manifest field {key!r}")
            setattr(m, key, value)
        return m

    def override(self, args: argparse.Namespace) -> None:
        for key in ("mode", "epochs", "learning_rate", "seed", "top_n", "k", "output_dir"):
            value = getattr(args, key, None)
            if value is not None:
                setattr(self, key, value)

    def validate(self, need: tuple[str, ...] = MANIFEST_FIELDS) -> None:
        for fieldname in need:
            path = getattr(self, fieldname)
            if not path:
                raise KgrecError(f"manifest field {fieldname!r} is required but missing")
            if not Path(path).exists():
                raise KgrecError(f"manifest field {fieldname!r}: path {path!r} does not exist")

    def kg_config(self) -> KgConfig:
        kwargs = {"mode": self.mode}
        if self.categorical_predicates:
            kwargs["categorical_predicates"] = frozenset(self.categorical_predicates)
        if self.factual_predicates:
            kwargs["factual_predicates"] = frozenset(self.factual_predicates)
        return KgConfig(**kwargs)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate,
                           seed=self.seed if seed is None else seed)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"


def _out_dir(manifest: Manifest) -> Path:
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return out


def _load_inputs(manifest: Manifest) -> tuple[list, Catalog, RatingsTable]:
    triples = load_triples(manifest.triples, manifest.triples_format)
    catalog = load_item_mapping(manifest.mapping)
    ratings = load_ratings(manifest.ratings)
    return triples, catalog, ratings


def cmd_build(manifest: Manifest, args: argparse.Namespace) -> int:
    manifest.validate()
    out = _out_dir(manifest)
    triples, catalog, ratings = _load_inputs(manifest)
    space, mask = build_feature_space(triples, catalog, manifest.kg_config())
    write_mask(mask, out / "mask.txt")
    write_features(space, out / "features.tsv")
    write_catalog(catalog, out / "catalog.tsv")
    print(f"rows={mask.m} cols={mask.n} nnz={mask.nnz}")
    lonely = mask.featureless_rows()
    if lonely:
        print(f"feature-less items: {len(lonely)}")
    return 0


def _build_artifacts(manifest: Manifest):
    triples, catalog, ratings = _load_inputs(manifest)
    space, mask = build_feature_space(triples, catalog, manifest.kg_config())
    return triples, catalog, ratings, space, mask


def _train_one(job) -> tuple[str, float]:
    """Worker: train one user's model and write its artifacts."""
    mask, catalog, space, stars, cfg, model_path, profile_path, user = job
    x = RatingVector.from_stars(catalog, stars)
    ae = UserAutoencoder(mask, cfg).train(x)
    ae.save(model_path)
    write_profile(extract_profile(ae, x, space, user=user), profile_path)
    return user, ae.final_loss


def cmd_train(manifest: Manifest, args: argparse.Namespace) -> int:
    manifest.validate()
    out = _out_dir(manifest)
    _, catalog, ratings, space, mask = _build_artifacts(manifest)
    (out / "models").mkdir(exist_ok=True)
    (out / "profiles").mkdir(exist_ok=True)
    if args.users == "all":
        users = ratings.users()
    else:
        users = [u.strip() for u in args.users.split(",") if u.strip()]
        unknown = [u for u in users if u not in ratings.by_user]
        if unknown:
            raise KgrecError(f"unknown users: {unknown}")
    log.info("training config: epochs=%d lr=%g seed=%d",
             manifest.epochs, manifest.learning_rate, manifest.seed)
    print(f"epochs={manifest.epochs} lr={manifest.learning_rate:g}")

    jobs = []
    skipped = 0
    for idx, user in enumerate(sorted(users)):
        stars5 = {i: r for i, r in ratings.user_ratings(user).items() if i in catalog}
        if not stars5:
            log.warning("user %s has no ratings over catalog items; skipped", user)
            skipped += 1
            continue
        cfg = TrainConfig(epochs=manifest.epochs, learning_rate=manifest.learning_rate,
                          seed=manifest.seed + idx)
        jobs.append((mask, catalog, space, stars5, cfg,
                     out / "models" / f"user_{user}.model",
                     out / "profiles" / f"user_{user}.tsv", user))

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    for user, loss in results:
        print(f"user={user} final_loss={loss:.6g}")
    if skipped:
        print(f"skipped={skipped}")
    return 0


def _trained_model(manifest: Manifest, user: str, catalog: Catalog, ratings: RatingsTable):
    model_path = Path(manifest.output_dir) / "models" / f"user_{user}.model"
    if not model_path.exists():
        raise KgrecError(f"no trained model for user {user!r} at {model_path}; run train first")
    ae = UserAutoencoder.load(model_path)
    stars = {i: r for i, r in ratings.user_ratings(user).items() if i in catalog}
    x = RatingVector.from_stars(catalog, stars)
    return ae, x


def cmd_recommend(manifest: Manifest, args: argparse.Namespace) -> int:
    manifest.validate()
    out = _out_dir(manifest)
    _, catalog, ratings, space, mask = _build_artifacts(manifest)
    ae, x = _trained_model(manifest, args.user, catalog, ratings)
    rec = recommend(ae, x, catalog, manifest.top_n, user=args.user)
    write_recommendations(rec, out / f"recommendations_{args.user}.tsv")
    for rank, (item, score) in enumerate(rec.items, start=1):
        print(f"{rank}\t{item}\t{catalog.title(item)}\t{score:.6f}")
    if rec.short:
        print("short list: fewer unrated items than requested")
    return 0


def cmd_explain(manifest: Manifest, args: argparse.Namespace) -> int:
    manifest.validate()
    if args.style not in STYLES:
        print(f"invalid style {args.style!r}; valid: {', '.join(STYLES)}", file=sys.stderr)
        return 2
    out = _out_dir(manifest)
    _, catalog, ratings, space, mask = _build_artifacts(manifest)
    ae, x = _trained_model(manifest, args.user, catalog, ratings)
    rec = recommend(ae, x, catalog, manifest.top_n, user=args.user)
    if len(rec.items) < 2:
        raise KgrecError("need at least two recommended items to explain the top pair")
    (i1, s1), (i2, s2) = rec.items[0], rec.items[1]
    profile = extract_profile(ae, x, space, user=args.user)
    bundle = build_bundle(args.style, profile=profile, item_i=i1, item_j=i2,
                          mask=mask, space=space, catalog=catalog,
                          k=manifest.k, seed=manifest.seed, score_i=s1, score_j=s2)
    write_bundles([bundle], out / f"explanation_{args.user}_{args.style}.jsonl")
    print("top recommendations:")
    for rank, (item, score) in enumerate(rec.items, start=1):
        print(f"  {rank}. {catalog.title(item)} ({score:.4f})")
    print(bundle.rendered)
    return 0


def _study_engine(manifest: Manifest, store: SessionStore | None = None,
                  clock=None) -> StudyEngine:
    triples, catalog, ratings = _load_inputs(manifest)
    cfg = StudyConfig(styles=tuple(manifest.styles), modes=tuple(manifest.study_modes),
                      top_n=manifest.top_n, k=manifest.k, min_select=manifest.min_select,
                      candidate_sample=manifest.candidate_sample,
                      train=manifest.train_config(), seed=manifest.seed)
    kwargs = {}
    if clock is not None:
        kwargs["clock"] = clock
    return StudyEngine(catalog, triples, cfg, store=store, ratings=ratings,
                       kg_defaults=manifest.kg_config(), **kwargs)


def _write_report(engine: StudyEngine, out: Path) -> None:
    report = engine.report()
    (out / "report.json").write_text(report_json(report), encoding="utf-8")
    (out / "report.txt").write_text(render_report(report), encoding="utf-8")
    print(render_report(report), end="")


def cmd_simulate(manifest: Manifest, args: argparse.Namespace) -> int:
    manifest.validate()
    if args.per_arm < 1:
        raise KgrecError("--per-arm must be >= 1")
    out = _out_dir(manifest)
    events_path = out / "events.jsonl"
    if events_path.exists():
        events_path.unlink()  # a simulation run regenerates its whole log
    store = SessionStore(events_path)
    counter = iter(range(10 ** 12))
    engine = _study_engine(manifest, store=store, clock=lambda: float(next(counter)))
    lift = json.loads(args.lift) if args.lift else None
    model = CohortModel(lift=lift, seed=manifest.seed) if lift else CohortModel(seed=manifest.seed)
    simulate_cohort(engine, args.per_arm, model)
    store.close()
    _write_report(engine, out)
    return 0


def cmd_report(manifest: Manifest, args: argparse.Namespace) -> int:
    manifest.validate()
    out = _out_dir(manifest)
    events = Path(args.events) if args.events else out / "events.jsonl"
    if not events.exists():
        raise KgrecError(f"event log {events} does not exist")
    store = SessionStore(events)
    engine = _study_engine(manifest, store=store)
    _write_report(engine, out)
    return 0


def cmd_serve(manifest: Manifest, args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    manifest.validate()
    out = _out_dir(manifest)
    store = SessionStore(out / "events.jsonl")
    engine = _study_engine(manifest, store=store)
    app = create_app(engine)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except SystemExit:
        raise
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    finally:
        store.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgrec",
                                     description="knowledge-graph autoencoder recommender")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--manifest", "-m", default=None, help="path to the run manifest (JSON)")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=MODES, default=None)
    common.add_argument("--epochs", type=int, default=None)
    common.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--top-n", dest="top_n", type=int, default=None)
    common.add_argument("--k", type=int, default=None)
    common.add_argument("--output-dir", dest="output_dir", default=None)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build mask + feature space artifacts")

    p_train = sub.add_parser("train", parents=[common], help="train per-user autoencoders")
    p_train.add_argument("--users", default="all", help="'all' or comma-separated user ids")
    p_train.add_argument("--jobs", type=int, default=1, help="parallel training workers")

    p_rec = sub.add_parser("recommend", parents=[common], help="top-N list for one user")
    p_rec.add_argument("--user", required=True)

    p_exp = sub.add_parser("explain", parents=[common], help="explain the top-2 pair")
    p_exp.add_argument("--user", required=True)
    p_exp.add_argument("--style", required=True)

    p_sim = sub.add_parser("simulate", parents=[common], help="run a synthetic cohort")
    p_sim.add_argument("--per-arm", dest="per_arm", type=int, default=73)
    p_sim.add_argument("--lift", default=None,
                       help='JSON style->stars delta, e.g. \'{"pairwise": 1}\'')

    p_rep = sub.add_parser("report", parents=[common], help="metrics report from an event log")
    p_rep.add_argument("--events", default=None)

    p_srv = sub.add_parser("serve", parents=[common], help="serve the study protocol")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    return parser


COMMANDS = {
    "build": cmd_build,
    "train": cmd_train,
    "recommend": cmd_recommend,
    "explain": cmd_explain,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("KGREC_LOG", "INFO").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        manifest = Manifest.load(args.manifest) if args.manifest else Manifest()
        manifest.override(args)
        if getattr(args, "learning_rate", None) is not None:
            manifest.learning_rate = args.learning_rate
        return COMMANDS[args.command](manifest, args)
    except KgrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
