"""Command-line pipeline: ingest -> build -> train -> project -> neighbors / plot.

Exit status is 0 on success, 1 on runtime failure and 2 on usage errors.
Every command writes into ``--out`` and records its settings under its own
key in ``<out>/manifest.json``.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, corpus, midi, seqmodel, tsne
from .errors import NotevecError

log = logging.getLogger("notevec")

DEFAULT_OUT = "notevec-out"


class UsageError(Exception):
    pass


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, args):
    path = out / "manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    settings = {k: (str(v) if isinstance(v, Path) else v)
                for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    manifest[command] = settings
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _existing(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _expand_midi_paths(paths):
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(f for f in p.rglob("*") if f.suffix.lower() in (".mid", ".midi") and f.is_file())
        else:
            files.append(p)
    return files


def cmd_ingest(args):
    out = _out_dir(args)
    files = _expand_midi_paths(args.paths)
    if not files:
        raise NotevecError("no .mid files found under the given paths")
    pieces, failures = [], 0
    for f in files:
        try:
            found, warnings = midi.read_midi(f)
        except (NotevecError, OSError) as exc:
            failures += 1
            print(f"error: {f}: {exc}", file=sys.stderr)
            continue
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        notes = sum(len(p) for p in found)
        print(f"{f}: {notes} notes in {len(found)} melody track(s)")
        pieces += found
    if failures == len(files):
        raise NotevecError("every input file failed to parse")
    if not pieces:
        raise NotevecError("no melody with at least 2 notes found")
    target = out / "pieces.txt"
    corpus.save_pieces(pieces, target)
    print(f"wrote {len(pieces)} pieces to {target}")
    _write_manifest(out, "ingest", args)


def cmd_build(args):
    if args.variant not in corpus.VARIANTS:
        raise UsageError(f"unknown variant {args.variant!r}; choose from {', '.join(corpus.VARIANTS)}")
    out = _out_dir(args)
    pieces = corpus.load_pieces(_existing(args.pieces))
    built = corpus.build(args.variant, pieces)
    target = out / f"dataset-{args.variant}.txt"
    corpus.save_corpus(built, target)
    print(f"{len(built.sequences)} sequences")
    print(f"Total: {len(built.vocabulary)}")
    labels = [analysis.token_label(t, args.variant) for t in built.vocabulary.tokens]
    print("vocabulary: " + " ".join(labels))
    print(f"wrote {target}")
    _write_manifest(out, "build", args)


def _train_config(args):
    return seqmodel.TrainConfig(
        embedding_dim=args.dim, hidden_size=args.hidden, window=args.window,
        batch_size=args.batch_size, learning_rate=args.lr, epochs=args.epochs,
        seed=args.seed, optimizer=args.optimizer, clip_norm=args.clip,
    )


def cmd_train(args):
    dataset = _existing(args.dataset)
    try:
        config = _train_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    data = corpus.load_corpus(dataset)

    def report(epoch, loss):
        if args.verbose:
            print(f"epoch {epoch}: loss {loss:.4f}")

    params, history = seqmodel.train(data, config, callback=report)
    ckpt = seqmodel.Checkpoint(config, data.variant, data.vocabulary, params)
    seqmodel.save_checkpoint(ckpt, out / "checkpoint.json")
    (out / "loss.csv").write_text(seqmodel.dumps_loss_history(history), encoding="utf-8")
    print(f"trained {data.variant} model: V={len(data.vocabulary)} D={config.embedding_dim} "
          f"H={config.hidden_size}, final loss {history[-1]:.4f}")
    print(f"wrote {out / 'checkpoint.json'} and {out / 'loss.csv'}")
    _write_manifest(out, "train", args)


def _labels(ckpt):
    return [analysis.token_label(t, ckpt.variant) for t in ckpt.vocabulary.tokens]


def cmd_project(args):
    ckpt = seqmodel.load_checkpoint(_existing(args.checkpoint))
    out = _out_dir(args)
    V = len(ckpt.vocabulary)
    if V < 4:
        raise NotevecError(f"t-SNE needs at least 4 tokens, vocabulary has {V}")
    perplexity = min(args.perplexity, max(2.0, (V - 1) / 3.0))
    if perplexity != args.perplexity:
        print(f"note: perplexity lowered to {perplexity:g} for a vocabulary of {V}", file=sys.stderr)
    config = tsne.TsneConfig(perplexity=perplexity, n_iter=args.iterations,
                             learning_rate=args.tsne_lr, seed=args.seed)
    labels = _labels(ckpt)
    rows = ckpt.params.embedding.rows
    proj = tsne.project(rows, args.dims, config, labels=labels)

    k = args.dims
    (out / f"projection-{k}d.tsv").write_text(tsne.dumps_projection(proj), encoding="utf-8")
    (out / f"kl-{k}d.csv").write_text(tsne.dumps_kl_history(proj.kl_history), encoding="utf-8")
    vectors, meta = analysis.export_projector(rows, labels, ckpt.vocabulary.tokens)
    (out / "vectors.tsv").write_text(vectors, encoding="utf-8")
    (out / "metadata.tsv").write_text(meta, encoding="utf-8")
    written = [f"projection-{k}d.tsv", f"kl-{k}d.csv", "vectors.tsv", "metadata.tsv"]
    if k == 2:
        (out / "projection-2d.svg").write_text(analysis.plot_projection(proj), encoding="utf-8")
        written.append("projection-2d.svg")
    print(f"final KL {proj.kl_history[-1]:.4f}; wrote " + ", ".join(written))
    _write_manifest(out, "project", args)


def _query(args, ckpt):
    try:
        return analysis.parse_token(args.query, ckpt.variant)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_neighbors(args):
    ckpt = seqmodel.load_checkpoint(_existing(args.checkpoint))
    token = _query(args, ckpt)
    emb = ckpt.params.embedding
    text = analysis.report_table(emb, ckpt.variant, token, args.k)
    print(text, end="")
    out = _out_dir(args)
    stem = f"neighbors-{ckpt.variant}-{analysis.token_label(token, ckpt.variant)}"
    (out / f"{stem}.txt").write_text(text, encoding="utf-8")
    (out / f"{stem}.csv").write_text(analysis.report_csv(emb, ckpt.variant, token, args.k), encoding="utf-8")
    _write_manifest(out, "neighbors", args)


def cmd_plot(args):
    ckpt = seqmodel.load_checkpoint(_existing(args.checkpoint))
    proj = tsne.loads_projection(_existing(args.projection).read_text(encoding="utf-8"))
    if proj.dims != 2:
        raise UsageError("plot needs a 2-D projection TSV")
    out = _out_dir(args)
    highlight, neighbors, title = None, (), None
    if args.query is not None:
        token = _query(args, ckpt)
        report = analysis.nearest_neighbors(ckpt.params.embedding, token, args.k)
        highlight = analysis.token_label(token, ckpt.variant)
        neighbors = [analysis.token_label(t, ckpt.variant) for t, _ in report.neighbors]
        title = f"{args.k} nearest neighbours of {highlight}"
    svg = analysis.plot_projection(proj, highlight, neighbors, title)
    name = f"plot-{highlight}.svg" if highlight else "plot.svg"
    (out / name).write_text(svg, encoding="utf-8")
    print(f"wrote {out / name}")
    _write_manifest(out, "plot", args)


def cmd_fixtures(args):
    from .fixtures import write_fixture_corpus

    out = _out_dir(args)
    paths = write_fixture_corpus(out, n=args.count, seed=args.seed)
    print(f"wrote {len(paths)} synthetic .mid files to {out}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out", default=DEFAULT_OUT, help=f"output directory (default {DEFAULT_OUT})")
    common.add_argument("--config", help="JSON file of option defaults; flags override it")

    parser = argparse.ArgumentParser(prog="notevec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse .mid files into a pitch file")
    p.add_argument("paths", nargs="+", help=".mid files or directories (searched recursively)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build", parents=[common], help="build a dataset variant from a pitch file")
    p.add_argument("pieces", help="pitch file written by 'ingest'")
    p.add_argument("--variant", default="control", help="control, db12 or interval")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", parents=[common], help="train embeddings + LSTM on a dataset")
    p.add_argument("dataset")
    d = seqmodel.TrainConfig()
    p.add_argument("--dim", type=int, default=d.embedding_dim, help="embedding dimension")
    p.add_argument("--hidden", type=int, default=d.hidden_size)
    p.add_argument("--window", type=int, default=d.window)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=d.optimizer)
    p.add_argument("--clip", type=float, default=d.clip_norm, help="gradient norm clip")
    p.add_argument("--verbose", action="store_true", help="print loss every epoch")
    p.set_defaults(func=cmd_train)

    t = tsne.TsneConfig()
    p = sub.add_parser("project", parents=[common], help="t-SNE projection of trained embeddings")
    p.add_argument("checkpoint")
    p.add_argument("--dims", type=int, choices=(2, 3), default=2)
    p.add_argument("--perplexity", type=float, default=t.perplexity)
    p.add_argument("--iterations", type=int, default=t.n_iter)
    p.add_argument("--tsne-lr", type=float, default=t.learning_rate)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("neighbors", parents=[common], help="nearest-neighbour table for a token")
    p.add_argument("checkpoint")
    p.add_argument("--query", required=True, help="note name (C5, A#9) or integer token")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("plot", parents=[common], help="SVG of a 2-D projection, optionally highlighted")
    p.add_argument("projection", help="projection-2d.tsv written by 'project'")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("fixtures", parents=[common], help="write a synthetic .mid corpus")
    p.add_argument("--count", type=int, default=24)
    p.set_defaults(func=cmd_fixtures)
    return parser, sub


def _apply_config_file(parser, sub, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        settings = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read --config {known.config}: {exc}")
    if not isinstance(settings, dict):
        parser.error("--config must hold a JSON object")
    shared = {k.replace("-", "_"): v for k, v in settings.items() if not isinstance(v, dict)}
    for name, subparser in sub.choices.items():
        own = {k.replace("-", "_"): v for k, v in settings.get(name, {}).items()}
        dests = {a.dest for a in subparser._actions}
        subparser.set_defaults(**{k: v for k, v in {**shared, **own}.items() if k in dests})


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser, sub = build_parser()
    _apply_config_file(parser, sub, argv)
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        sub.choices[args.command].print_usage(sys.stderr)
        print(f"notevec {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (NotevecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
