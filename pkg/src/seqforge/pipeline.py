"""End-to-end orchestration with per-sequence checkpoint/resume.

Each subcommand advances sequences that sit exactly one stage behind it and
skips everything already done, so a rerun after a crash (or on a completed
checkpoint) reprocesses nothing and issues no agent calls. Failures in one
sequence mark that sequence rejected and never abort the others; only
pipeline-level faults (sandbox unavailable after retry) flip the exit code.
"""

from __future__ import annotations

import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

from . import checkpoint as cp
from .agents import AgentClient, AgentConfig, AgentRole, HttpBackend, MockBackend
from .dataset import (
    build_record,
    compute_stats,
    read_dataset,
    resample,
    stats_table,
    stats_to_json,
    write_dataset,
)
from .errors import (
    CheckpointCorrupt,
    ConfigInvalid,
    SandboxUnavailable,
    ScriptMiss,
    SeqforgeError,
)
from .filtering import RuleConfig, run_filter
from .nextnum import build_eval_set, evaluate, report_table, report_to_json
from .oeis import merge_bfile, parse_bfile, parse_internal_format, split_records
from .problems import generate_problem, validate_problem
from .sandbox import ExecLimits, SubprocessSandboxClient
from .supervision import SOLVED, run_supervision

SUBCOMMANDS = ("ingest", "filter", "generate", "supervise", "emit", "stats", "eval", "all")

_ID_IN_TEXT_RE = re.compile(r"A\d{6}")


@dataclass
class PipelineConfig:
    corpus_path: str | None = None
    bfile_dir: str | None = None
    checkpoint_dir: str = "checkpoints"
    dataset_path: str = "dataset.jsonl"
    stats_path: str = "stats.json"
    eval_report_path: str = "eval_report.json"
    audit_log_path: str | None = None
    rule: RuleConfig = field(default_factory=RuleConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    working_backend: dict | None = None
    guiding_backend: dict | None = None
    eval_backend: dict | None = None
    mock_script: str | None = None
    max_rounds: int = 5
    limits: ExecLimits = field(default_factory=ExecLimits)
    gen_retries: int = 2
    resample_count: int = 0
    workers: int = 1
    rng_seed: int = 0
    runner_cmd: list[str] | None = None
    eval_n: int = 200
    eval_k: int = 0
    eval_prefix_len: int = 10
    tokenizer_path: str | None = None

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        rule = RuleConfig(**data.pop("rule", {}))
        agents_cfg = data.pop("agents", {})
        working = agents_cfg.pop("working", None)
        guiding = agents_cfg.pop("guiding", None)
        eval_backend = agents_cfg.pop("eval", None)
        agent = AgentConfig(**agents_cfg) if agents_cfg else AgentConfig()
        limits_cfg = data.pop("limits", {})
        max_rounds = limits_cfg.pop("max_rounds", data.pop("max_rounds", 5))
        try:
            limits = ExecLimits(**limits_cfg) if limits_cfg else ExecLimits()
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc
        eval_cfg = data.pop("eval", {})
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        return cls(
            rule=rule,
            agent=agent,
            working_backend=working,
            guiding_backend=guiding,
            eval_backend=eval_backend,
            max_rounds=max_rounds,
            limits=limits,
            eval_n=eval_cfg.get("n", 200),
            eval_k=eval_cfg.get("k", 0),
            eval_prefix_len=eval_cfg.get("prefix_len", 10),
            **data,
        )

    def validate(self, subcommand: str):
        problems = []
        if self.max_rounds < 0:
            problems.append(f"max_rounds must be >= 0, got {self.max_rounds}")
        if self.workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers}")
        if self.gen_retries < 1:
            problems.append(f"gen_retries must be >= 1, got {self.gen_retries}")
        if self.resample_count < 0:
            problems.append(f"resample_count must be >= 0, got {self.resample_count}")
        if self.rule.min_terms < 1:
            problems.append(f"rule.min_terms must be >= 1, got {self.rule.min_terms}")
        if self.eval_k not in (0, 5):
            problems.append(f"eval k must be 0 or 5, got {self.eval_k}")
        if subcommand in ("ingest", "all"):
            if not self.corpus_path:
                problems.append("corpus_path is required for ingest")
            elif not Path(self.corpus_path).exists():
                problems.append(f"corpus_path does not exist: {self.corpus_path}")
        if self.bfile_dir and not Path(self.bfile_dir).is_dir():
            problems.append(f"bfile_dir is not a directory: {self.bfile_dir}")
        if self.mock_script and not Path(self.mock_script).exists():
            problems.append(f"mock_script does not exist: {self.mock_script}")
        if problems:
            raise ConfigInvalid("; ".join(problems))


def build_agent_client(config: PipelineConfig, backend=None) -> AgentClient:
    """Mock backend (shared by both roles) or per-role HTTP backends."""
    if backend is None:
        if config.mock_script:
            backend = MockBackend.from_script_file(config.mock_script)
        elif config.working_backend and config.guiding_backend:
            return AgentClient(
                backends={
                    AgentRole.WORKING: HttpBackend(**config.working_backend),
                    AgentRole.GUIDING: HttpBackend(**config.guiding_backend),
                },
                config=config.agent,
                audit_log_path=config.audit_log_path,
            )
        else:
            raise ConfigInvalid("either mock_script or both agent backends must be configured")
    return AgentClient(
        backends={AgentRole.WORKING: backend, AgentRole.GUIDING: backend},
        config=config.agent,
        audit_log_path=config.audit_log_path,
    )


class PipelineRun:
    def __init__(self, config: PipelineConfig, client: AgentClient | None = None,
                 sandbox_factory=None, model_fn=None):
        self.config = config
        self.store = cp.CheckpointStore(config.checkpoint_dir)
        self._client = client
        self.sandbox_factory = sandbox_factory or (
            lambda: SubprocessSandboxClient(cmd=config.runner_cmd)
        )
        self.model_fn = model_fn
        self.faults: list[str] = []
        self._fault_lock = threading.Lock()

    @property
    def client(self) -> AgentClient:
        if self._client is None:
            self._client = build_agent_client(self.config)
        return self._client

    def _fault(self, message: str):
        with self._fault_lock:
            self.faults.append(message)

    # --- per-stage drivers -------------------------------------------------

    def ingest(self):
        text = Path(self.config.corpus_path).read_text(encoding="utf-8")
        for chunk in split_records(text):
            seq_id = None
            try:
                entry = parse_internal_format(chunk)
                seq_id = entry.id
                if self.store.read_state(seq_id) is not None:
                    continue  # resume: already ingested (or beyond)
                entry = self._merge_bfile_if_any(entry)
                self.store.write_entry(entry)
                self.store.set_stage(seq_id, cp.STAGE_INGESTED)
            except (ScriptMiss, CheckpointCorrupt):
                raise
            except SeqforgeError as exc:
                match = _ID_IN_TEXT_RE.search(chunk)
                seq_id = seq_id or (match.group(0) if match else None)
                if seq_id is None:
                    self._fault(f"unidentifiable record rejected: {exc}")
                    continue
                if self.store.read_state(seq_id) is None:
                    self.store.set_stage(seq_id, cp.STAGE_REJECTED,
                                         reason=f"{type(exc).__name__}: {exc}")

    def _merge_bfile_if_any(self, entry):
        if not self.config.bfile_dir:
            return entry
        bfile = Path(self.config.bfile_dir) / f"b{entry.id[1:]}.txt"
        if not bfile.exists():
            return entry
        pairs = parse_bfile(bfile.read_text(encoding="utf-8"))
        return merge_bfile(entry, pairs)  # OverlapMismatch -> rejected as corrupt

    def filter(self):
        self._for_each_at(cp.STAGE_INGESTED, self._filter_one)

    def _filter_one(self, seq_id: str):
        entry = self.store.read_entry(seq_id)
        verdict = run_filter(entry, self.client, self.config.rule)
        self.store.write_verdict(seq_id, {
            "passed": verdict.passed,
            "reason_codes": verdict.reason_codes,
            "agent_report": (verdict.agent_report.__dict__
                             if verdict.agent_report else None),
            "raw_agent_reply": verdict.raw_agent_reply,
        })
        if verdict.passed:
            self.store.set_stage(seq_id, cp.STAGE_FILTERED)
        else:
            self.store.set_stage(seq_id, cp.STAGE_REJECTED,
                                 reason=",".join(verdict.reason_codes))

    def generate(self):
        self._for_each_at(cp.STAGE_FILTERED, self._generate_one)

    def _generate_one(self, seq_id: str):
        entry = self.store.read_entry(seq_id)
        problem = generate_problem(entry, self.client, gen_retries=self.config.gen_retries)
        problem = validate_problem(problem, self.client)
        self.store.write_problem(problem)
        if problem.validated:
            self.store.set_stage(seq_id, cp.STAGE_PROBLEM_VALIDATED)
        else:
            self.store.set_stage(seq_id, cp.STAGE_REJECTED, reason="ValidationFailed")

    def supervise(self):
        self._for_each_at(cp.STAGE_PROBLEM_VALIDATED, self._supervise_one,
                          session_factory=self.sandbox_factory)

    def _supervise_one(self, seq_id: str, sandbox_client):
        entry = self.store.read_entry(seq_id)
        problem = self.store.read_problem(seq_id)
        try:
            trace = self._run_trace(problem, sandbox_client)
        except SandboxUnavailable:
            trace = self._run_trace(problem, sandbox_client)  # one whole-sequence retry
        pairs = [(problem, trace)]
        if trace.terminal == SOLVED and self.config.resample_count > 0:
            for variant, seed_code in resample(entry, problem, self.client,
                                               self.config.resample_count,
                                               gen_retries=self.config.gen_retries):
                pairs.append((variant, run_supervision(
                    variant, self.client, sandbox_client,
                    max_rounds=self.config.max_rounds, limits=self.config.limits,
                    gen_retries=self.config.gen_retries, initial_code=seed_code,
                )))
        self.store.write_traces(seq_id, pairs)
        self.store.set_stage(
            seq_id,
            cp.STAGE_SOLVED if trace.terminal == SOLVED else cp.STAGE_EXHAUSTED,
            reason=trace.pipeline_error,
        )

    def _run_trace(self, problem, sandbox_client):
        return run_supervision(
            problem, self.client, sandbox_client,
            max_rounds=self.config.max_rounds,
            limits=self.config.limits,
            gen_retries=self.config.gen_retries,
        )

    def emit(self) -> int:
        records = []
        for seq_id in self.store.sequence_ids():
            if not self.store.has_traces(seq_id):
                continue
            for resample_index, problem, trace in self.store.read_traces(seq_id):
                if trace.terminal == SOLVED:
                    records.append(build_record(problem, trace, resample_index=resample_index))
        records.sort(key=lambda r: (r.sequence_id, r.resample_index))
        write_dataset(records, self.config.dataset_path)
        return len(records)

    def stats(self):
        records = read_dataset(self.config.dataset_path)
        traces = []
        for seq_id in self.store.sequence_ids():
            if self.store.has_traces(seq_id):
                traces.extend(t for _, _, t in self.store.read_traces(seq_id))
        tokenizer = None
        if self.config.tokenizer_path:
            from .dataset import HFTokenizer
            tokenizer = HFTokenizer(self.config.tokenizer_path)
        stats = compute_stats(records, traces, tokenizer=tokenizer)
        Path(self.config.stats_path).write_text(stats_to_json(stats), encoding="utf-8")
        return stats

    def eval(self):
        corpus = [self.store.read_entry(seq_id) for seq_id in self.store.sequence_ids()
                  if (Path(self.config.checkpoint_dir) / seq_id / "entry.json").exists()]
        training_ids = set()
        if Path(self.config.dataset_path).exists():
            training_ids = {r.sequence_id for r in read_dataset(self.config.dataset_path)}
        items = build_eval_set(corpus, training_ids, self.config.eval_n,
                               self.config.rng_seed,
                               prefix_len=self.config.eval_prefix_len)
        model_fn = self.model_fn or self._build_model_fn()
        report = evaluate(model_fn, items, self.config.eval_k, self.config.rng_seed)
        Path(self.config.eval_report_path).write_text(report_to_json(report),
                                                      encoding="utf-8")
        return report

    def _build_model_fn(self):
        if self.config.mock_script:
            backend = MockBackend.from_script_file(self.config.mock_script)
            return lambda prompt: backend.complete(None, "next_number", {}, prompt, 0.0)
        if self.config.eval_backend:
            backend = HttpBackend(**self.config.eval_backend)
            return lambda prompt: backend.complete(None, "next_number", {}, prompt, 0.0)
        raise ConfigInvalid("eval needs mock_script or an eval backend config")

    # --- scheduling ---------------------------------------------------------

    def _for_each_at(self, stage: str, fn, session_factory=None):
        """Run fn over every sequence currently at `stage`.

        Sequence-level SeqforgeErrors reject that sequence only. ScriptMiss
        always propagates (a test scripting hole must fail loudly), as do
        non-SeqforgeError exceptions and KeyboardInterrupt.
        """
        ids = [s for s in self.store.sequence_ids() if self.store.stage(s) == stage]

        def process(seq_id: str, session=None):
            try:
                if session_factory is None:
                    fn(seq_id)
                else:
                    fn(seq_id, session)
            except (ScriptMiss, CheckpointCorrupt):
                raise
            except SandboxUnavailable as exc:
                self._fault(f"{seq_id}: {exc}")
                self.store.set_stage(seq_id, cp.STAGE_REJECTED,
                                     reason=f"SandboxUnavailable: {exc}")
            except SeqforgeError as exc:
                self.store.set_stage(seq_id, cp.STAGE_REJECTED,
                                     reason=f"{type(exc).__name__}: {exc}")

        if self.config.workers == 1:
            session = session_factory() if session_factory else None
            try:
                for seq_id in ids:
                    process(seq_id, session)
            finally:
                if session is not None:
                    session.close()
            return

        local = threading.local()
        sessions = []
        sessions_lock = threading.Lock()

        def with_session(seq_id: str):
            if session_factory is None:
                process(seq_id)
                return
            if not hasattr(local, "session"):
                local.session = session_factory()
                with sessions_lock:
                    sessions.append(local.session)
            process(seq_id, local.session)

        try:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                futures = [pool.submit(with_session, seq_id) for seq_id in ids]
                for future in as_completed(futures):
                    future.result()
        finally:
            for session in sessions:
                session.close()


def run(config: PipelineConfig, subcommand: str, client: AgentClient | None = None,
        sandbox_factory=None, model_fn=None) -> int:
    """Execute one subcommand (or `all`); returns the process exit status."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigInvalid(f"unknown subcommand {subcommand!r}")
    config.validate(subcommand)
    pipeline = PipelineRun(config, client=client, sandbox_factory=sandbox_factory,
                           model_fn=model_fn)
    stages = [subcommand]
    if subcommand == "all":
        stages = ["ingest", "filter", "generate", "supervise", "emit", "stats"]
    for stage in stages:
        if stage == "ingest":
            pipeline.ingest()
        elif stage == "filter":
            pipeline.filter()
        elif stage == "generate":
            pipeline.generate()
        elif stage == "supervise":
            pipeline.supervise()
        elif stage == "emit":
            pipeline.emit()
        elif stage == "stats":
            stats = pipeline.stats()
            print(stats_table(stats))
        elif stage == "eval":
            report = pipeline.eval()
            print(report_table(report))
    for fault in pipeline.faults:
        print(f"pipeline fault: {fault}")
    return 0 if not pipeline.faults else 1
