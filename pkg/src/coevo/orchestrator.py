"""The closed evolution loop.

Each generation, every island selects a parent from its archive, samples a
mutation strategy from experience, composes a prompt, asks the LLM for an
offspring, evaluates it in a sandboxed subprocess, records the outcome,
and archives it if scored. The prompt then evolves from the generation's
experience and islands exchange elites on the migration schedule. With the
mock backend and a fixed seed the whole run is reproducible bit for bit,
and every generation is checkpointed for exact resume.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import archive as arch
from .archive import EvolutionState, GridConfig, MigrationConfig, descriptor
from .errors import ConfigError, EmptyResponseError, LlmError
from .evaluator import Candidate, EvalReport, RunnerConfig, evaluate_candidate
from .experience import (
    OUTCOME_FAILURE,
    ExperienceRecord,
    ExperienceStore,
    make_outcome,
    strategy_stats,
    summarize,
)
from .instances import InstanceSet, load_benchmark
from .llm import Backend, CompletionRequest, HttpBackend, MockBackend, complete, extract_code
from .oracles import ensure_optima
from .promptevo import (
    PromptState,
    compose_prompt,
    evolve_prompt,
    sample_strategy,
    strategy_pool,
)
from .seeds import SEEDS, seed_source

CHECKPOINT_VERSION = 1
REPORT_VERSION = 1


@dataclass
class RunConfig:
    problem: str = "tsp"
    instances: str = ""
    seeds: tuple[str, ...] = ("nearest-neighbor",)
    iterations: int = 20
    islands: int = 5
    migration_interval: int = 4
    migrants_per_event: int = 1
    timeout_s: float = 600.0
    total_timeout_s: float | None = None
    rng_seed: int = 0
    backend: str = "mock"  # "mock" | "live"
    mock_script: str | None = None
    endpoint: str = ""
    api_key: str = ""
    model: str = "default"
    temperature: float = 0.8
    top_p: float = 0.95
    max_tokens: int = 4096
    parallelism: int = 1
    experience_window: int = 5
    strategy_temperature: float = 1.0
    epsilon_base: float = 0.2
    epsilon_raised: float = 0.4
    stagnation_window: int = 3
    prompt_update_interval: int = 1
    per_island_prompts: bool = False
    island_per_iteration: bool = False
    repair_failed_offspring: bool = False
    llm_call_cap: int | None = None
    checkpoint_interval: int = 1
    oracle_tsp_limit: int = 18
    oracle_bpp_limit: int = 20

    def validate(self) -> None:
        if self.problem not in ("tsp", "bpp"):
            raise ConfigError(f"problem must be tsp or bpp, got {self.problem!r}")
        if not self.instances:
            raise ConfigError("instances path is required")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.islands < 1:
            raise ConfigError("islands must be >= 1")
        if not self.timeout_s > 0:
            raise ConfigError("timeout must be positive")
        if self.total_timeout_s is not None and not self.total_timeout_s > 0:
            raise ConfigError("total timeout must be positive when set")
        if self.migration_interval < 0:
            raise ConfigError("migration_interval must be >= 0 (0 disables migration)")
        if self.prompt_update_interval < 1:
            raise ConfigError("prompt_update_interval must be >= 1")
        if self.checkpoint_interval < 1:
            raise ConfigError("checkpoint_interval must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.experience_window < 1:
            raise ConfigError("experience_window must be >= 1")
        if not self.strategy_temperature > 0:
            raise ConfigError("strategy_temperature must be positive")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        if self.backend not in ("mock", "live"):
            raise ConfigError(f"backend must be mock or live, got {self.backend!r}")
        if self.backend == "mock" and not self.mock_script:
            raise ConfigError("mock backend requires a mock_script path")
        if self.backend == "live" and not self.endpoint:
            raise ConfigError("live backend requires an endpoint")
        if not self.seeds:
            raise ConfigError("at least one seed heuristic is required")
        for name in self.seeds:
            if name not in SEEDS:
                raise ConfigError(f"unknown seed heuristic {name!r}")
            if SEEDS[name].problem != self.problem:
                raise ConfigError(f"seed {name!r} does not solve problem {self.problem!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        """Flat ``key = value`` text; '#' starts a comment; seeds comma-separated."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path} line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in fields:
                raise ConfigError(f"{path} line {lineno}: unknown key {key!r}")
            values[key] = _coerce(key, value, lineno, path)
        return cls(**values)


def _coerce(key: str, value: str, lineno: int, path) -> object:
    none_ok = {"total_timeout_s", "mock_script", "llm_call_cap"}
    if key in none_ok and value.lower() in ("none", ""):
        return None
    if key == "seeds":
        return tuple(s.strip() for s in value.split(",") if s.strip())
    bools = {
        "per_island_prompts", "island_per_iteration", "repair_failed_offspring",
    }
    if key in bools:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{path} line {lineno}: {key} must be true/false")
    ints = {
        "iterations", "islands", "migration_interval", "migrants_per_event", "rng_seed",
        "max_tokens", "parallelism", "experience_window", "stagnation_window",
        "prompt_update_interval", "llm_call_cap", "checkpoint_interval",
        "oracle_tsp_limit", "oracle_bpp_limit",
    }
    if key in ints:
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{path} line {lineno}: {key} must be an integer") from None
    floats = {
        "timeout_s", "total_timeout_s", "temperature", "top_p", "strategy_temperature",
        "epsilon_base", "epsilon_raised",
    }
    if key in floats:
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{path} line {lineno}: {key} must be a number") from None
    return value


@dataclass
class RunReport:
    problem: str
    dataset: str
    seeds: tuple[str, ...]
    iterations: int
    islands: int
    migration_interval: int
    rng_seed: int
    backend: str
    base_errors: dict[str, float]
    best_id: str = ""
    best_source: str = ""
    best_error: float | None = None
    trace: list[float] = field(default_factory=list)
    strategy_usage: dict[str, int] = field(default_factory=dict)
    generated_per_generation: list[int] = field(default_factory=list)
    executable_per_generation: list[int] = field(default_factory=list)
    executable_rate: float | None = None
    executable_rate_per_generation: list[float | None] = field(default_factory=list)
    prompt_versions: list[dict] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    llm_calls: int = 0
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "problem": self.problem,
            "dataset": self.dataset,
            "seeds": list(self.seeds),
            "iterations": self.iterations,
            "islands": self.islands,
            "migration_interval": self.migration_interval,
            "rng_seed": self.rng_seed,
            "backend": self.backend,
            "base_errors": self.base_errors,
            "best": {"id": self.best_id, "source": self.best_source,
                     "mean_relative_error": self.best_error},
            "trace": self.trace,
            "strategy_usage": self.strategy_usage,
            "generated_per_generation": self.generated_per_generation,
            "executable_per_generation": self.executable_per_generation,
            "executable_rate": self.executable_rate,
            "executable_rate_per_generation": self.executable_rate_per_generation,
            "prompt_versions": self.prompt_versions,
            "events": self.events,
            "llm_calls": self.llm_calls,
            "wall_time_s": self.wall_time_s,
        }


def build_backend(config: RunConfig) -> Backend:
    if config.backend == "mock":
        return MockBackend.from_file(config.mock_script)
    return HttpBackend(endpoint=config.endpoint, api_key=config.api_key)


class EvolutionRun:
    """One configured run: owns the state, the loop, and its files."""

    def __init__(
        self,
        config: RunConfig,
        out_dir: str | Path | None = None,
        backend: Backend | None = None,
        instance_set: InstanceSet | None = None,
    ):
        config.validate()
        self.config = config
        self.out = Path(out_dir) if out_dir is not None else None
        if self.out is not None:
            (self.out / "checkpoints").mkdir(parents=True, exist_ok=True)
        self.instances = instance_set if instance_set is not None else load_benchmark(
            config.instances
        )
        if self.instances.kind != config.problem:
            raise ConfigError(
                f"instance set is {self.instances.kind}, config says {config.problem}"
            )
        self.instances = ensure_optima(
            self.instances, tsp_limit=config.oracle_tsp_limit, bpp_limit=config.oracle_bpp_limit
        )
        self.backend = backend if backend is not None else build_backend(config)
        self.runner_cfg = RunnerConfig(
            timeout_s=config.timeout_s,
            total_timeout_s=config.total_timeout_s,
            workers=config.parallelism,
        )
        self.grid = GridConfig()
        self.state = EvolutionState.fresh(config.islands, config.rng_seed)
        self.reports: dict[str, EvalReport] = {}
        exp_path = self.out / "experience.jsonl" if self.out else None
        self.experience = ExperienceStore(exp_path)
        n_prompts = config.islands if config.per_island_prompts else 1
        self.prompts = [PromptState.initial(config.problem) for _ in range(n_prompts)]
        self.base_errors: dict[str, float] = {}
        self.trace: list[float] = []
        self.strategy_usage: dict[str, int] = {}
        self.generated: list[int] = []
        self.executable: list[int] = []
        self.events: list[str] = []
        self.llm_calls = 0
        self.next_seq = 0
        self.pending_repair: dict[int, str] = {}
        self.initialized = False

    # -- id and prompt helpers ------------------------------------------

    def _next_id(self) -> str:
        cid = f"c{self.next_seq:06d}"
        self.next_seq += 1
        return cid

    def _prompt_for(self, island: int) -> PromptState:
        return self.prompts[island if self.config.per_island_prompts else 0]

    def _request(self, prompt: str, tag: str) -> CompletionRequest:
        return CompletionRequest(
            messages=(("user", prompt),),
            temperature=self.config.temperature,
            top_p=self.config.top_p,
            max_tokens=self.config.max_tokens,
            model=self.config.model,
            tag=tag,
        )

    def _complete(self, prompt: str, tag: str) -> str | None:
        """One guarded completion; None means the call failed or was capped."""
        if self.config.llm_call_cap is not None and self.llm_calls >= self.config.llm_call_cap:
            self.events.append(f"gen {self.state.generation}: llm call cap reached")
            return None
        self.llm_calls += 1
        try:
            return complete(self.backend, self._request(prompt, tag)).text
        except LlmError as exc:
            self.events.append(f"gen {self.state.generation}: llm failure ({exc})")
            return None

    # -- loop phases -----------------------------------------------------

    def init_population(self) -> EvolutionState:
        """Evaluate the configured seeds and plant them on every island."""
        if self.initialized:
            return self.state
        probe_reports: dict[str, EvalReport] = {}
        for name in self.config.seeds:
            probe = Candidate(id=f"probe-{name}", source=seed_source(name))
            report = evaluate_candidate(probe, self.instances, self.runner_cfg)
            if report.mean_relative_error is None:
                raise ConfigError(
                    f"seed {name!r} failed evaluation ({report.failure_class}): "
                    f"{report.diagnostic}"
                )
            probe_reports[name] = report
            self.base_errors[name] = report.mean_relative_error
        for island in self.state.islands:
            for name in self.config.seeds:
                probe_report = probe_reports[name]
                cand = Candidate(
                    id=self._next_id(),
                    source=seed_source(name),
                    island=island.island_id,
                    generation=0,
                    strategy_used="seed",
                    performance=-probe_report.mean_relative_error,
                )
                cand.descriptor = descriptor(cand, probe_report, self.grid)
                self.state.register(cand)
                self.experience.register(cand.id)
                self.reports[cand.id] = dataclasses.replace(probe_report, candidate_id=cand.id)
                island.insert(cand, generation=0)
                self.state.update_best(cand)
        self.initialized = True
        self._write_checkpoint()
        return self.state

    def _evolve_island(self, island_idx: int, generation: int) -> bool | None:
        """One offspring attempt; True if it scored, False if not, None if skipped."""
        island = self.state.islands[island_idx]
        if not island.cells:
            return None
        pstate = self._prompt_for(island_idx)

        repair_id = self.pending_repair.pop(island_idx, None)
        if repair_id is not None and self.config.repair_failed_offspring:
            parent = self.state.candidates[repair_id]
            strategy_name = "repair"
            strategy = strategy_pool()[0]  # ignored by compose in failure mode
        else:
            epsilon = arch.epsilon_schedule(
                self.state.stagnation,
                base=self.config.epsilon_base,
                raised=self.config.epsilon_raised,
                window=self.config.stagnation_window,
            )
            parent = arch.select_parent(
                island, self.state.rng, epsilon, self.state.candidates
            )
            strategy = sample_strategy(
                strategy_stats(self.experience),
                temperature=self.config.strategy_temperature,
                rng=self.state.rng,
            )
            strategy_name = strategy.name

        parent_report = self.reports[parent.id]
        summary = summarize(self.experience, self.config.experience_window)
        prompt = compose_prompt(pstate, strategy, parent, parent_report, summary)

        text = self._complete(prompt, tag="generate")
        if text is None:
            return None
        try:
            source = extract_code(text)
        except EmptyResponseError:
            self.events.append(f"gen {generation}: island {island_idx} empty completion")
            return None

        child = Candidate(
            id=self._next_id(),
            source=source,
            parent_id=parent.id,
            island=island_idx,
            generation=generation,
            strategy_used=strategy_name,
        )
        self.state.register(child)
        self.experience.register(child.id)
        self.strategy_usage[strategy_name] = self.strategy_usage.get(strategy_name, 0) + 1

        report = evaluate_candidate(child, self.instances, self.runner_cfg)
        self.reports[child.id] = report

        if report.mean_relative_error is not None:
            parent_error = (
                -parent.performance
                if parent.performance is not None
                else report.mean_relative_error
            )
            outcome, delta = make_outcome(parent_error, report.mean_relative_error)
            rec = ExperienceRecord(
                generation=generation,
                island=island_idx,
                parent_id=parent.id,
                child_id=child.id,
                strategy_used=strategy_name,
                prompt_version=pstate.current_id,
                outcome=outcome,
                delta=delta,
                child_error=report.mean_relative_error,
            )
            self.experience.record(rec)
            pstate.attribute(pstate.current_id, outcome)
            child.descriptor = descriptor(child, report, self.grid)
            island.insert(child, generation)
            self.state.update_best(child)
            return True

        rec = ExperienceRecord(
            generation=generation,
            island=island_idx,
            parent_id=parent.id,
            child_id=child.id,
            strategy_used=strategy_name,
            prompt_version=pstate.current_id,
            outcome=OUTCOME_FAILURE,
            failure_class=report.failure_class,
            diagnostic=report.diagnostic,
        )
        self.experience.record(rec)
        pstate.attribute(pstate.current_id, OUTCOME_FAILURE)
        if self.config.repair_failed_offspring:
            self.pending_repair[island_idx] = child.id
        return False

    def step(self) -> EvolutionState:
        """Run exactly one generation across the islands."""
        if not self.initialized:
            raise ConfigError("run not initialized; call init_population first")
        generation = self.state.generation + 1
        if self.config.island_per_iteration:
            island_ids = [arch.select_island(self.state, self.state.rng)]
        else:
            island_ids = [isl.island_id for isl in self.state.islands]

        best_before = self.state.best_so_far.performance
        generated = 0
        scored = 0
        for island_idx in island_ids:
            result = self._evolve_island(island_idx, generation)
            if result is None:
                continue
            generated += 1
            if result:
                scored += 1

        self.state.generation = generation
        improved = self.state.best_so_far.performance > best_before
        self.state.stagnation = 0 if improved else self.state.stagnation + 1
        best_error = -self.state.best_so_far.performance
        self.trace.append(best_error)
        self.generated.append(generated)
        self.executable.append(scored)

        evolve_now = generation % self.config.prompt_update_interval == 0
        summary = summarize(self.experience, self.config.experience_window)
        for pstate in self.prompts:
            pstate.observe(generation, best_error)
            if not evolve_now:
                continue
            if self.config.llm_call_cap is not None and self.llm_calls >= self.config.llm_call_cap:
                self.events.append(f"gen {generation}: llm call cap reached; prompt kept")
                continue
            self.llm_calls += 1
            evolve_prompt(
                pstate,
                summary,
                self.backend,
                generation,
                request_defaults={
                    "temperature": self.config.temperature,
                    "top_p": self.config.top_p,
                    "max_tokens": self.config.max_tokens,
                    "model": self.config.model,
                },
            )

        if (
            self.config.migration_interval > 0
            and generation % self.config.migration_interval == 0
            and len(self.state.islands) > 1
        ):
            mig = arch.migrate(
                self.state,
                MigrationConfig(
                    interval=self.config.migration_interval,
                    migrants_per_event=self.config.migrants_per_event,
                ),
            )
            accepted = sum(1 for *_rest, outcome in mig.offers if outcome != arch.REJECTED)
            self.events.append(
                f"gen {generation}: migration, {len(mig.offers)} offers, {accepted} accepted"
            )

        if generation % self.config.checkpoint_interval == 0:
            self._write_checkpoint()
        return self.state

    def run(self) -> RunReport:
        started = time.monotonic()
        self.init_population()
        while self.state.generation < self.config.iterations:
            self.step()
        report = self.build_report()
        report.wall_time_s = time.monotonic() - started
        if self.out is not None:
            write_report(report, self.out / "report.json")
            (self.out / "best_candidate.py").write_text(report.best_source)
        return report

    def build_report(self) -> RunReport:
        best = self.state.best_so_far
        rates: list[float | None] = [
            (e / g) if g else None for g, e in zip(self.generated, self.executable)
        ]
        total_gen = sum(self.generated)
        prompt_versions = []
        for i, pstate in enumerate(self.prompts):
            for v in pstate.versions:
                entry = {
                    "id": v.id,
                    "created_at_generation": v.created_at_generation,
                    "discarded": v.discarded,
                    "outcomes": dict(sorted(v.outcomes.items())),
                }
                if self.config.per_island_prompts:
                    entry["island"] = i
                prompt_versions.append(entry)
        return RunReport(
            problem=self.config.problem,
            dataset=Path(self.config.instances).name,
            seeds=self.config.seeds,
            iterations=self.config.iterations,
            islands=self.config.islands,
            migration_interval=self.config.migration_interval,
            rng_seed=self.config.rng_seed,
            backend=self.config.backend,
            base_errors=dict(sorted(self.base_errors.items())),
            best_id=best.id,
            best_source=best.source,
            best_error=-best.performance,
            trace=list(self.trace),
            strategy_usage=dict(sorted(self.strategy_usage.items())),
            generated_per_generation=list(self.generated),
            executable_per_generation=list(self.executable),
            executable_rate=(sum(self.executable) / total_gen) if total_gen else None,
            executable_rate_per_generation=rates,
            prompt_versions=prompt_versions,
            events=list(self.events),
            llm_calls=self.llm_calls,
        )

    # -- checkpointing ----------------------------------------------------

    def checkpoint_dict(self) -> dict:
        llm_state = {}
        if isinstance(self.backend, MockBackend):
            llm_state = self.backend.state_dict()
        return {
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "state": self.state.to_dict(),
            "prompts": [p.to_dict() for p in self.prompts],
            "experience": self.experience.to_dict(),
            "reports": {cid: r.to_dict() for cid, r in sorted(self.reports.items())},
            "llm_state": llm_state,
            "counters": {
                "base_errors": self.base_errors,
                "trace": self.trace,
                "strategy_usage": self.strategy_usage,
                "generated": self.generated,
                "executable": self.executable,
                "events": self.events,
                "llm_calls": self.llm_calls,
                "next_seq": self.next_seq,
                "pending_repair": {str(k): v for k, v in self.pending_repair.items()},
                "initialized": self.initialized,
            },
        }

    def _write_checkpoint(self) -> None:
        if self.out is None:
            return
        path = self.out / "checkpoints" / f"gen-{self.state.generation:04d}.json"
        path.write_text(json.dumps(self.checkpoint_dict(), sort_keys=True))

    @classmethod
    def from_checkpoint(
        cls,
        path: str | Path,
        out_dir: str | Path | None = None,
        backend: Backend | None = None,
    ) -> "EvolutionRun":
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {doc.get('version')!r}")
        config = RunConfig.from_dict(doc["config"])
        run = cls(config, out_dir=out_dir, backend=backend)
        run.state = EvolutionState.from_dict(doc["state"])
        run.prompts = [PromptState.from_dict(p) for p in doc["prompts"]]
        exp_path = run.out / "experience.jsonl" if run.out else None
        run.experience = ExperienceStore.from_dict(doc["experience"], exp_path)
        run.reports = {cid: EvalReport.from_dict(r) for cid, r in doc["reports"].items()}
        if isinstance(run.backend, MockBackend):
            run.backend.load_state_dict(doc.get("llm_state", {}))
        c = doc["counters"]
        run.base_errors = dict(c["base_errors"])
        run.trace = list(c["trace"])
        run.strategy_usage = dict(c["strategy_usage"])
        run.generated = list(c["generated"])
        run.executable = list(c["executable"])
        run.events = list(c["events"])
        run.llm_calls = c["llm_calls"]
        run.next_seq = c["next_seq"]
        run.pending_repair = {int(k): v for k, v in c["pending_repair"].items()}
        run.initialized = c["initialized"]
        return run


def run(config: RunConfig, out_dir: str | Path | None = None,
        backend: Backend | None = None) -> RunReport:
    return EvolutionRun(config, out_dir=out_dir, backend=backend).run()


def resume(checkpoint: str | Path, out_dir: str | Path | None = None,
           backend: Backend | None = None) -> RunReport:
    """Continue a checkpointed run to completion and write its report."""
    started = time.monotonic()
    evo = EvolutionRun.from_checkpoint(checkpoint, out_dir=out_dir, backend=backend)
    while evo.state.generation < evo.config.iterations:
        evo.step()
    report = evo.build_report()
    report.wall_time_s = time.monotonic() - started
    if evo.out is not None:
        write_report(report, evo.out / "report.json")
        (evo.out / "best_candidate.py").write_text(report.best_source)
    return report


def write_report(report: RunReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n")
