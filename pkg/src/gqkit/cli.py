"""`gq`: one entry point wiring all modules into reproducible batch commands.

Exit codes: 0 success, 1 validation/usage error, 2 backend failure. No command
overwrites an existing output without --force. With identical config, inputs,
and stub backends every command is byte-reproducible.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analysis, annotation, datagen, generation, metrics
from .backends import BackendConfig, BackendError, HttpBackend
from .config import RunConfig, load_config
from .corpus import (
    NO_ANSWER,
    AnnotatedDocument,
    CorpusFormatError,
    CorpusValidationError,
    GuidingQuestion,
    QuestionRole,
    load_corpus,
    save_corpus,
    with_questions,
)
from .evidence import extract_evidence
from .extraction import RawArticle, extract_questions, filter_corpus, load_abbreviations
from .stubs import AnnotationStub, ConstantLogprobStub, FinetunedStub, OneHotEmbeddingStub

log = logging.getLogger("gq")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        self.code = code
        super().__init__(message)


def _check_output(path: str, cfg: RunConfig) -> None:
    if Path(path).exists() and not cfg.force:
        raise CliError(f"refusing to overwrite {path} (use --force)")


def _write_sidecar(path: str, cfg: RunConfig) -> None:
    meta = Path(str(path) + ".meta.json")
    meta.write_text(json.dumps(cfg.provenance(), sort_keys=True) + "\n", encoding="utf-8")


def _generation_backend(cfg: RunConfig, paradigm: str | None = None):
    if cfg.backend == "stub":
        return FinetunedStub(paradigm) if paradigm else AnnotationStub()
    bc = BackendConfig(api_base=cfg.api_base, model=cfg.model, api_key=cfg.api_key,
                       max_in_flight=cfg.concurrency)
    if not bc.api_base:
        raise CliError("no endpoint configured: set GQ_API_BASE or use --backend stub",
                       EXIT_BACKEND)
    if cfg.require_api_key and not bc.api_key:
        raise CliError(
            "GQ_API_KEY is not set; export it (or pass --no-auth for keyless local "
            "endpoints, or use --backend stub for offline runs)",
            EXIT_BACKEND,
        )
    return HttpBackend(bc)


def _scoring_backend(cfg: RunConfig):
    if cfg.backend == "stub":
        return ConstantLogprobStub(-2.0)
    return _generation_backend(cfg)


def _embedding_backend(cfg: RunConfig):
    if cfg.backend == "stub":
        return OneHotEmbeddingStub()
    return _generation_backend(cfg)


def _load_raw_articles(path: str) -> list[RawArticle]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                out.append(RawArticle(
                    doc_id=str(d["doc_id"]), domain=str(d["domain"]),
                    title=str(d.get("title", "")), body_text=str(d["body_text"]),
                ))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise CliError(f"{path}:{lineno}: bad raw article: {exc}")
    return out


def _emit_json(payload: dict, out: str | None, cfg: RunConfig) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False)
    if out:
        _check_output(out, cfg)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# --- subcommands -------------------------------------------------------------

def cmd_extract(args, cfg: RunConfig) -> int:
    abbrev = load_abbreviations(cfg.abbrev_file) if cfg.abbrev_file else None
    articles = _load_raw_articles(args.infile)
    kept = filter_corpus(articles, min_questions=cfg.min_questions, abbreviations=abbrev)
    docs = []
    for art in kept:
        doc, extracted = extract_questions(art, abbrev)
        questions = []
        for k, eq in enumerate(extracted, start=1):
            role = (QuestionRole.AROUSE_INTEREST if eq.sentence_index == 0
                    else QuestionRole.PROVOKE_THOUGHT)
            questions.append(GuidingQuestion(
                qid=f"{doc.doc_id}-q{k}",
                raw_text=eq.text,
                completed_text=eq.text,
                position=eq.sentence_index,
                role=role,
                answer=NO_ANSWER,
            ))
        docs.append(with_questions(AnnotatedDocument(document=doc), questions))
    _check_output(args.out, cfg)
    save_corpus(docs, args.out)
    _write_sidecar(args.out, cfg)
    log.info("extracted %d/%d documents -> %s", len(docs), len(articles), args.out)
    return EXIT_OK


def _annotate_one(adoc: AnnotatedDocument, cfg: RunConfig, backend) -> AnnotatedDocument:
    doc = adoc.document
    questions = list(adoc.questions)
    if not questions:
        return adoc
    tdir = cfg.template_dir
    batch = annotation.build_completion_batch(adoc)
    completed = annotation.complete_questions(batch, backend, tdir)
    questions = [
        GuidingQuestion(
            qid=q.qid, raw_text=q.raw_text, completed_text=c, position=q.position,
            role=q.role, answer=q.answer,
        )
        for q, c in zip(questions, completed)
    ]

    answers = annotation.answer_questions(doc, questions, backend, tdir)
    updated = []
    for q, (ans, conf) in zip(questions, answers):
        if ans == NO_ANSWER:
            evidence, keywords = (), ()
        else:
            result = extract_evidence(ans, doc, max_sentences=cfg.evidence_max_sentences)
            evidence = result.indices
            ev_sents = [doc.sentence(i) for i in evidence]
            keywords = tuple(
                datagen.extract_answer_keywords(ev_sents, doc, k=cfg.keyword_k)
            ) if ev_sents else ()
        updated.append(GuidingQuestion(
            qid=q.qid, raw_text=q.raw_text, completed_text=q.completed_text,
            position=q.position, role=q.role, answer=ans, answer_keywords=keywords,
            evidence_indices=evidence, confidence_answer=conf,
        ))
    questions = updated

    body_questions = [q for q in questions if q.position > 0]
    roles = annotation.identify_roles(
        doc, [(q.completed_text, q.answer) for q in body_questions], backend, tdir
    ) if body_questions else []
    role_by_qid = {q.qid: r for q, r in zip(body_questions, roles)}
    final = []
    for q in questions:
        if q.position == 0:
            role, conf_role = QuestionRole.AROUSE_INTEREST, 5
        else:
            role, _analysis, conf_role = role_by_qid[q.qid]
            if role is QuestionRole.AROUSE_INTEREST:
                raise annotation.AnnotationValidationError(
                    f"question {q.qid}: ArouseInterest assigned to a non-title question"
                )
        final.append(GuidingQuestion(
            qid=q.qid, raw_text=q.raw_text, completed_text=q.completed_text,
            position=q.position, role=role, answer=q.answer,
            answer_keywords=q.answer_keywords, evidence_indices=q.evidence_indices,
            confidence_answer=q.confidence_answer, confidence_role=conf_role,
        ))
    return with_questions(adoc, final)


def cmd_annotate(args, cfg: RunConfig) -> int:
    backend = _generation_backend(cfg)
    docs = load_corpus(args.infile)
    _check_output(args.out, cfg)
    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        annotated = list(pool.map(lambda d: _annotate_one(d, cfg, backend), docs))
    save_corpus(annotated, args.out)
    _write_sidecar(args.out, cfg)
    if args.review_queue:
        _check_output(args.review_queue, cfg)
        items = [
            item
            for adoc in annotated
            for item in annotation.triage_low_confidence(adoc.questions, cfg.triage_threshold)
        ]
        n = annotation.write_review_queue(items, args.review_queue)
        log.info("review queue: %d flagged rows -> %s", n, args.review_queue)
    log.info("annotated %d documents -> %s", len(annotated), args.out)
    return EXIT_OK


def cmd_analyze(args, cfg: RunConfig) -> int:
    docs = load_corpus(args.infile)
    report = analysis.build_report(docs, provenance=cfg.provenance())
    if args.csv_dir:
        analysis.write_report_csvs(report, args.csv_dir)
    _emit_json(report.to_json_dict(), args.out, cfg)
    return EXIT_OK


def cmd_prepare(args, cfg: RunConfig) -> int:
    backend = _generation_backend(cfg)
    docs = load_corpus(args.infile)
    _check_output(args.out, cfg)
    paradigms = (["PP", "AE", "QG", "Multitask", "Joint", "JointR"]
                 if args.paradigm == "all" else [args.paradigm])
    examples = []
    smoothed_docs = []
    for adoc in docs:
        smoothed = datagen.prepare_document(
            adoc, backend, noise_rate=cfg.noise_rate, seed=cfg.seed,
            template_dir=cfg.template_dir,
        )
        smoothed_docs.append(smoothed)
        for paradigm in paradigms:
            examples.extend(datagen.make_training_examples(
                smoothed, adoc.questions, paradigm,
                title=adoc.document.title, include_title=args.include_title,
            ))
    datagen.save_training_examples(examples, args.out)
    _write_sidecar(args.out, cfg)
    if args.smoothed_out:
        _check_output(args.smoothed_out, cfg)
        with open(args.smoothed_out, "w", encoding="utf-8") as f:
            for s in smoothed_docs:
                f.write(json.dumps({
                    "doc_id": s.doc_id,
                    "sentences": list(s.sentences),
                    "index_map": {str(k): v for k, v in sorted(s.index_map.items())},
                    "noise_indices": list(s.noise_indices),
                }, ensure_ascii=False) + "\n")
    log.info("prepared %d training examples -> %s", len(examples), args.out)
    return EXIT_OK


def cmd_generate(args, cfg: RunConfig) -> int:
    docs = load_corpus(args.infile)
    _check_output(args.out, cfg)
    sets = []
    if args.paradigm == "ZeroShot":
        backend = _generation_backend(cfg)
        for adoc in docs:
            sets.append(generation.run_zero_shot(
                adoc.document, backend, template_dir=cfg.template_dir,
                temperature=cfg.zero_shot_temperature,
            ))
    else:
        backend = _generation_backend(cfg, paradigm=args.paradigm)
        for adoc in docs:
            qset = generation.run_finetuned(
                adoc.document, args.paradigm, backend,
                max_input_tokens=cfg.max_input_tokens, concurrency=cfg.concurrency,
            )
            if args.match_reference_count and adoc.questions:
                qset = generation.control_question_count(
                    qset, len(adoc.questions), adoc.document, backend,
                    max_input_tokens=cfg.max_input_tokens,
                )
            sets.append(qset)
    generation.save_question_sets(sets, args.out)
    _write_sidecar(args.out, cfg)
    log.info("generated question sets for %d documents -> %s", len(sets), args.out)
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    generated = generation.load_question_sets(args.gen)
    reference = load_corpus(args.ref)
    backend = _embedding_backend(cfg)
    report = metrics.evaluate_question_sets(generated, reference, backend,
                                            system=args.system)
    report.provenance = cfg.provenance()
    payload = report.to_json_dict()
    if args.per_domain:
        by_domain: dict[str, list] = {}
        for doc in reference:
            by_domain.setdefault(doc.document.domain, []).append(doc)
        payload["domains"] = {}
        for domain, docs in sorted(by_domain.items()):
            ids = {d.doc_id for d in docs}
            sub = metrics.evaluate_question_sets(
                [g for g in generated if g.doc_id in ids], docs, backend, system=args.system)
            payload["domains"][domain] = sub.to_json_dict()
    _emit_json(payload, args.out, cfg)
    return EXIT_OK


def cmd_ppl_profile(args, cfg: RunConfig) -> int:
    corpus = {d.doc_id: d for d in load_corpus(args.corpus)}
    backend = _scoring_backend(cfg)
    profiles = []
    if args.gen:
        for qset in generation.load_question_sets(args.gen):
            doc = corpus.get(qset.doc_id)
            if doc is None:
                log.warning("doc %s not in corpus; skipped", qset.doc_id)
                continue
            for item in qset.items:
                if 1 <= item.position <= doc.document.n:
                    profiles.append(metrics.position_ppl_profile(
                        doc.document, item.question, item.position, backend))
    else:
        from .corpus import Document
        for adoc in corpus.values():
            for q in adoc.questions:
                # a reference question sits at its own index: profiling it means
                # removing it and re-inserting after the preceding sentence, so
                # the augmented sequence is the original document
                anchor = q.position - 1
                if anchor < 1:
                    continue
                reduced = Document(
                    doc_id=adoc.doc_id, domain=adoc.document.domain,
                    title=adoc.document.title,
                    sentences=tuple(
                        s for i, s in enumerate(adoc.document.sentences, start=1)
                        if i != q.position
                    ),
                )
                profiles.append(metrics.position_ppl_profile(
                    reduced, adoc.document.sentence(q.position), anchor, backend))
    if not profiles:
        raise CliError("no profilable questions found")
    agg = metrics.aggregate_ppl_profiles(profiles)
    payload = agg.to_json_dict()
    payload["provenance"] = cfg.provenance()
    _emit_json(payload, args.out, cfg)
    return EXIT_OK


def cmd_entscore(args, cfg: RunConfig) -> int:
    corpus = {d.doc_id: d for d in load_corpus(args.ref)}
    backend = _embedding_backend(cfg)
    pairs = []
    with open(args.summaries, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            doc = corpus.get(d["doc_id"])
            if doc is None:
                log.warning("summary for unknown doc %s skipped", d["doc_id"])
                continue
            pairs.append((d["summary"], [q.answer for q in doc.questions]))
    score = metrics.ent_score(pairs, backend)
    _emit_json({"ent_score": score, "n_summaries": len(pairs),
                "provenance": cfg.provenance()}, args.out, cfg)
    return EXIT_OK


def cmd_judge(args, cfg: RunConfig) -> int:
    corpus = {d.doc_id: d for d in load_corpus(args.corpus)}
    if args.doc_id not in corpus:
        raise CliError(f"doc {args.doc_id!r} not found in {args.corpus}")
    summaries = []
    with open(args.summaries, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                summaries.append(json.loads(line)["summary"])
    backend = _generation_backend(cfg)
    scores, analyses = metrics.judge_summaries(
        corpus[args.doc_id].document, summaries, args.metric, backend,
        template_dir=cfg.template_dir, temperature=cfg.judge_temperature,
    )
    _emit_json({"metric": args.metric, "scores": scores, "analyses": analyses,
                "provenance": cfg.provenance()}, args.out, cfg)
    return EXIT_OK


# --- argument wiring -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gq",
        description="Guiding-question corpus construction, generation, and evaluation.",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--backend", choices=["http", "stub"], default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--concurrency", type=int, default=None)
    parser.add_argument("--template-dir", default=None,
                        help="directory with prompt template overrides")
    parser.add_argument("--force", action="store_true", default=None,
                        help="allow overwriting existing outputs")
    parser.add_argument("--no-auth", action="store_true",
                        help="permit http backends without GQ_API_KEY (local endpoints)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="mine questions from raw articles (construction step 1)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-questions", type=int, default=None)
    p.add_argument("--abbrev", dest="abbrev_file", default=None)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("annotate", help="complete, answer, find evidence, and label roles")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--review-queue", default=None)
    p.add_argument("--threshold", type=int, default=None, dest="triage_threshold")
    p.set_defaults(fn=cmd_annotate)

    p = sub.add_parser("analyze", help="distributional reports over an annotated corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--csv-dir", default=None)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("prepare", help="build training data (question removal + smoothing)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paradigm", default="all",
                   choices=["all", "PP", "AE", "QG", "Multitask", "Joint", "JointR"])
    p.add_argument("--noise-rate", type=float, default=None, dest="noise_rate")
    p.add_argument("--include-title", action="store_true")
    p.add_argument("--smoothed-out", default=None)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("generate", help="generate question sets for documents")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paradigm", required=True,
                   choices=["Pipeline", "Multitask", "Joint", "JointR", "ZeroShot"])
    p.add_argument("--match-reference-count", action="store_true")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated question sets against references")
    p.add_argument("--gen", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--system", default="system")
    p.add_argument("--per-domain", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ppl-profile", help="position perplexity profile around questions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gen", default=None,
                   help="generated sets to profile; defaults to reference questions")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_ppl_profile)

    p = sub.add_parser("entscore", help="answer-recall entailment score of summaries")
    p.add_argument("--summaries", required=True, help="JSONL with doc_id + summary")
    p.add_argument("--ref", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_entscore)

    p = sub.add_parser("judge", help="LLM-judge three summaries on one quality metric")
    p.add_argument("--corpus", required=True)
    p.add_argument("--doc-id", required=True)
    p.add_argument("--summaries", required=True, help="JSONL with three summary records")
    p.add_argument("--metric", required=True,
                   choices=["Coherence", "Consistency", "Informativeness"])
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_judge)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    overrides = {
        "backend": args.backend,
        "seed": args.seed,
        "concurrency": args.concurrency,
        "template_dir": args.template_dir,
        "force": args.force,
        "min_questions": getattr(args, "min_questions", None),
        "abbrev_file": getattr(args, "abbrev_file", None),
        "triage_threshold": getattr(args, "triage_threshold", None),
        "noise_rate": getattr(args, "noise_rate", None),
    }
    if args.no_auth:
        overrides["require_api_key"] = False
    try:
        cfg = load_config(args.config, overrides)
        problems = cfg.validate()
        if problems:
            raise CliError("invalid configuration: " + "; ".join(problems))
        return args.fn(args, cfg)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (CorpusFormatError, CorpusValidationError, datagen.DataGenError,
            annotation.AnnotationError, generation.GenerationError,
            metrics.MetricError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except BackendError as exc:
        log.error("backend failure: %s", exc)
        return EXIT_BACKEND
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
