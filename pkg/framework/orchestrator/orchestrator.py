import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from framework.augmentation.augmentation_module import (
    AugmenterFarm,
    PbmTransform,
    load_augmenter,
    save_augmenter,
    train_augmenter_farm,
)
from framework.beam_optimization.optimization_module import CombinationPool, exhaustive_select, fitness, ga_optimize
from framework.rate_mapping.rate_mapping_module import load_mapper, predict_rate, save_mapper, train_mapper
from probeopt_core.beamforming.hybrid import PipelineParams, evaluate_probing_config, full_beamspace_rate
from probeopt_core.beamforming.probing import ProbingConfig, build_probing_configs
from probeopt_core.channel.channel_sim import generate_channel, resolve_noise_power, sample_user_positions
from probeopt_core.config.loader import ConfigLoader
from probeopt_core.config.run_registry import RunRegistry
from probeopt_core.config.settings import ExperimentConfig, ModelTag
from probeopt_core.evaluation.metrics import Provenance, empirical_cdf, mmd_per_combo
from probeopt_core.neural.optim import TrainingHistory
from probeopt_core.seeding import derive_seed
from probeopt_core.storage.dataset_store import LabeledDataset, Split
from probeopt_core.storage.report_writer import write_report_csv, write_summary

logger = logging.getLogger(__name__)

# Seed streams of the top-level stages
STREAM_NOISE = 1
STREAM_SPLIT = 2
STREAM_POSITIONS = 3
STREAM_CHANNEL = 4
STREAM_AUGMENT = 5
STREAM_SWEEP = 6

DATASET_FILE = "data/dataset.pbds"
DATASET_CSV = "data/dataset.csv"
MAPPER_FILE = "models/mapper.pbck"


class StageStatus(str, Enum):
    SUCCESS = "success"


@dataclass
class StageResult:
    stage: str
    status: StageStatus
    config_hash: str
    seed: int
    artifacts: Dict[str, str] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "stage": self.stage,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "artifacts": self.artifacts,
            "details": self.details,
        }


def augmenter_file(tag: ModelTag) -> str:
    return f"models/augmenter-{ModelTag(tag).value}.pbck"


def split_locations(n_locations: int, fractions: Tuple[float, float, float], seed: int) -> np.ndarray:
    """Split code per location set; a seeded permutation fills train, validation, then test."""
    order = np.random.default_rng(seed).permutation(n_locations)
    n_train = int(round(fractions[0] * n_locations))
    n_val = min(n_locations - n_train, int(round(fractions[1] * n_locations)))
    codes = np.full(n_locations, Split.TEST.code, dtype=int)
    codes[order[:n_train]] = Split.TRAIN.code
    codes[order[n_train : n_train + n_val]] = Split.VALIDATION.code
    return codes


class ExperimentOrchestrator:
    """
    Runs the experiment stages against one output directory.

    generate -> train -> optimize, with evaluate reading the artifacts of
    generate and train. Every artifact is recorded in the RunRegistry with
    the config hash and seed that produced it.
    """

    def __init__(self, config: ExperimentConfig, workers: Optional[int] = None):
        """
        Initialize the orchestrator.

        Args:
            config: Validated experiment configuration
            workers: Thread count for channel generation and augmentation
        """
        self.config = config
        self.output_dir = config.output_dir
        self.workers = workers or config.workers or 1
        self.config_hash = ConfigLoader.config_hash(config)
        self.registry = RunRegistry(self.output_dir)
        self.probing_configs: List[ProbingConfig] = build_probing_configs(
            config.scenario.geometry,
            config.scenario.n_aps,
            config.probing.beams_per_ap,
            config.probing.n_combos,
            config.probing.layout,
        )

    # helpers

    def _path(self, relative: str) -> str:
        return os.path.join(self.output_dir, relative)

    def _record(self, name: str, kind: str, relative: str) -> str:
        self.registry.record(name, kind, relative, self.config_hash, self.config.seed)
        return self._path(relative)

    def _result(self, stage: str, artifacts: Dict[str, str], details: Dict[str, Any]) -> StageResult:
        logger.info(f"Stage {stage} finished", extra={"fields": {"artifacts": artifacts}})
        return StageResult(stage, StageStatus.SUCCESS, self.config_hash, self.config.seed, artifacts, details)

    def _pipeline_params(self, noise_power: float) -> PipelineParams:
        pipeline = self.config.pipeline
        return PipelineParams(
            classes=pipeline.classes,
            keep=pipeline.keep,
            regularizer=pipeline.regularizer,
            tx_power=self.config.scenario.tx_power,
            noise_power=noise_power,
        )

    def _location_channel(self, location: int):
        scenario, seed = self.config.scenario, self.config.seed
        positions = sample_user_positions(scenario, derive_seed(seed, STREAM_POSITIONS, location))
        return generate_channel(scenario, derive_seed(seed, STREAM_CHANNEL, location), positions)

    def _conditions(self, combos: np.ndarray) -> np.ndarray:
        return np.vstack([self.probing_configs[int(c) - 1].condition for c in combos])

    def _load_dataset(self) -> LabeledDataset:
        return LabeledDataset.load(self.registry.require("dataset"))

    def _training_data(self, dataset: LabeledDataset, train_size: int) -> Tuple[LabeledDataset, LabeledDataset]:
        sampled = self.config.probing.sampled()
        train = dataset.filter(Split.TRAIN, sampled).limit_per_combo(train_size)
        validation = dataset.filter(Split.VALIDATION, sampled)
        return train, validation

    def _test_data(self, dataset: LabeledDataset) -> LabeledDataset:
        return dataset.filter(Split.TEST).limit_per_combo(self.config.dataset.test_size)

    def _map(self, fn, items):
        if self.workers <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, items))

    # stages

    def run_generate(self) -> StageResult:
        """Sample location sets, simulate channels and label every (location set, combination)."""
        config = self.config
        n_locations = config.dataset.n_location_sets
        logger.info("Stage generate started", extra={"fields": {"location_sets": n_locations, "out": self.output_dir}})

        # 1. Noise power and split assignment
        noise_power = resolve_noise_power(config.scenario, derive_seed(config.seed, STREAM_NOISE))
        params = self._pipeline_params(noise_power)
        splits = split_locations(n_locations, config.dataset.split, derive_seed(config.seed, STREAM_SPLIT))
        sampled = config.probing.sampled()

        # 2. Label every location set; test sets get every combination
        def label(location: int) -> List[Dict[str, Any]]:
            channel = self._location_channel(location)
            split = Split.from_code(splits[location])
            combos = range(1, config.probing.n_combos + 1) if split == Split.TEST else sampled
            records = []
            for combo in combos:
                outcome = evaluate_probing_config(channel, self.probing_configs[combo - 1], params)
                records.append(
                    {"pbm": outcome.pbm.values, "rate": outcome.rate, "combo": combo,
                     "location": location, "split": split.value}
                )
            return records

        records = [r for batch in self._map(label, range(n_locations)) for r in batch]
        dim = config.scenario.n_users * config.scenario.n_aps * config.probing.beams_per_ap
        dataset = LabeledDataset.from_records(
            records,
            dim,
            {"config_hash": self.config_hash, "seed": config.seed, "noise_power": repr(noise_power)},
        )

        # 3. Persist
        dataset.save(self._record("dataset", "dataset", DATASET_FILE))
        dataset.to_csv(self._record("dataset_csv", "dataset", DATASET_CSV))
        counts = {s.value: int(np.sum(dataset.split == s.code)) for s in Split}
        return self._result(
            "generate",
            {"dataset": self._path(DATASET_FILE), "dataset_csv": self._path(DATASET_CSV)},
            {"samples": len(dataset), "by_split": counts, "noise_power": noise_power},
        )

    def train_models(
        self, dataset: LabeledDataset, tag: ModelTag, train_size: int, seed: int
    ) -> AugmenterFarm:
        """Augmenter(s) of one tag on the first ``train_size`` training samples per combination."""
        train, validation = self._training_data(dataset, train_size)
        return train_augmenter_farm(
            tag,
            train.pbm,
            self._conditions(train.combo),
            train.combo,
            self.config.augmenter,
            (validation.pbm, self._conditions(validation.combo), validation.combo) if len(validation) else None,
            splits=train.splits(),
            seed=seed,
        )

    def run_train(self, tag: Optional[ModelTag] = None) -> StageResult:
        """Train the augmenter of the configured tag and the rate mapper."""
        tag = ModelTag(tag or self.config.model_tag)
        dataset = self._load_dataset()
        train, validation = self._training_data(dataset, self.config.dataset.train_size)
        logger.info("Stage train started", extra={"fields": {"tag": tag.value, "train_samples": len(train)}})

        # 1. Augmenter
        farm = self.train_models(dataset, tag, self.config.dataset.train_size, self.config.augmenter.seed)
        augmenter_path = self._record(f"augmenter/{tag.value}", "checkpoint", augmenter_file(tag))
        save_augmenter(augmenter_path, farm, {"config_hash": self.config_hash, "seed": self.config.seed})

        # 2. Rate mapper
        mapper, mapper_history = train_mapper(
            train.pbm,
            self._conditions(train.combo),
            train.rate,
            self.config.mapper,
            (validation.pbm, self._conditions(validation.combo), validation.rate) if len(validation) else None,
            splits=train.splits(),
        )
        mapper_path = self._record("mapper", "checkpoint", MAPPER_FILE)
        save_mapper(mapper_path, mapper, {"config_hash": self.config_hash, "seed": self.config.seed})

        # 3. Loss curves
        curves = {f"loss_augmenter_{tag.value}": self._write_history(f"reports/loss-augmenter-{tag.value}.csv",
                                                                   farm.histories),
                  "loss_mapper": self._write_history("reports/loss-mapper.csv", {"mapper": mapper_history})}
        best = mapper_history.epochs[mapper_history.best_epoch] if mapper_history.best_epoch >= 0 else {}
        return self._result(
            "train",
            {"augmenter": augmenter_path, "mapper": mapper_path, **curves},
            {
                "tag": tag.value,
                "train_samples": len(train),
                "augmenter_models": sorted(farm.histories),
                "augmenter_diverged": any(h.diverged for h in farm.histories.values()),
                "mapper_validation_rmse": best.get("validation_rmse"),
            },
        )

    def _write_history(self, relative: str, histories: Dict[str, TrainingHistory]) -> str:
        columns = sorted({key for h in histories.values() for row in h.epochs for key in row} - {"epoch"})
        rows = [
            [name, row["epoch"]] + [row.get(key, "") for key in columns]
            for name, history in histories.items()
            for row in history.epochs
        ]
        write_report_csv(self._path(relative), ["model", "epoch"] + columns, rows, self.config_hash, self.config.seed)
        return self._record(relative, "report", relative)

    def run_optimize(self, tag: Optional[ModelTag] = None) -> StageResult:
        """Augment, predict, pool and select the probing combination."""
        config = self.config
        tag = ModelTag(tag or config.model_tag)
        dataset = self._load_dataset()
        farm = load_augmenter(self.registry.require(f"augmenter/{tag.value}"))
        mapper = load_mapper(self.registry.require("mapper"))
        train, _ = self._training_data(dataset, config.dataset.train_size)
        test = self._test_data(dataset)
        n_combos = config.probing.n_combos
        logger.info("Stage optimize started", extra={"fields": {"tag": tag.value, "aug_size": config.dataset.aug_size}})

        # 1. Augmented PBMs and their predicted rates per combination
        def augment(combo: int) -> Tuple[np.ndarray, np.ndarray]:
            if config.dataset.aug_size == 0:
                return np.zeros((0, dataset.dim)), np.zeros(0)
            condition = self.probing_configs[combo - 1].condition
            pbms = farm.generate(combo, condition, config.dataset.aug_size, derive_seed(config.seed, STREAM_AUGMENT, combo))
            return pbms, predict_rate(mapper, pbms, condition)

        combos = list(range(1, n_combos + 1))
        augmented = dict(zip(combos, self._map(augment, combos)))

        # 2. Pool and selection
        by_combo = train.by_combo()
        pool = CombinationPool.from_rates(
            {c: d.rate for c, d in by_combo.items()},
            {c: augmented[c][1] for c in combos if augmented[c][1].size},
            n_combos,
        )
        exhaustive = exhaustive_select(pool)
        ga = ga_optimize(pool, config.ga)

        # 3. Reports
        test_by_combo = test.by_combo()
        rows = []
        for combo in combos:
            n_sampled, n_augmented = pool.counts(combo)
            true_mean = float(test_by_combo[combo].rate.mean()) if combo in test_by_combo else ""
            rows.append([combo, n_sampled, n_augmented, fitness(pool, combo), true_mean])
        artifacts = {
            "fitness": self._report(
                "reports/fitness.csv", ["combo_index", "n_sampled", "n_augmented", "fitness", "test_mean_rate"], rows
            ),
            "ga_trace": self._report(
                "reports/ga-trace.csv",
                ["restart", "generation", "best", "mean"],
                [[t.restart, t.generation, t.best, t.mean] for t in ga.trace],
            ),
        }
        reference = {c: d.pbm for c, d in test_by_combo.items()}
        candidate = {c: augmented[c][0] for c in combos if augmented[c][0].shape[0] > 0}
        space = PbmTransform.fit(train.pbm)
        scores = mmd_per_combo(
            {c: space.transform(v) for c, v in reference.items()},
            {c: space.transform(v) for c, v in candidate.items()},
            config.evaluation.bandwidth,
        )
        artifacts["mmd"] = self._report(
            "reports/mmd.csv", ["model_tag", "combo_index", "mmd"], [[tag.value, c, s] for c, s in scores.items()]
        )
        artifacts["cdf"] = self._report("reports/cdf.csv", ["combo_index", "source", "value", "probability"],
                                        self._cdf_rows(test_by_combo, mapper))
        true_best = max(test_by_combo, key=lambda c: (test_by_combo[c].rate.mean(), -c)) if test_by_combo else None
        details = {
            "tag": tag.value,
            "exhaustive_combo": exhaustive,
            "ga_combo": ga.best_combo,
            "ga_fitness": ga.best_fitness,
            "test_best_combo": true_best,
        }
        summary = self._path("reports/summary.txt")
        write_summary(
            summary,
            "Probing combination selection",
            {
                "run": {"config_hash": self.config_hash, "seed": config.seed, "model_tag": tag.value},
                "selection": details,
                "fitness": {str(r[0]): r[3] for r in rows},
                "mmd": {str(c): s for c, s in scores.items()},
            },
        )
        artifacts["summary"] = self._record("reports/summary.txt", "report", "reports/summary.txt")
        return self._result("optimize", artifacts, details)

    def _report(self, relative: str, columns: List[str], rows: List[List[Any]]) -> str:
        write_report_csv(self._path(relative), columns, rows, self.config_hash, self.config.seed)
        return self._record(relative, "report", relative)

    def _cdf_rows(self, test_by_combo: Dict[int, LabeledDataset], mapper) -> List[List[Any]]:
        rows = []
        for combo, data in sorted(test_by_combo.items()):
            predicted = predict_rate(mapper, data.pbm, self.probing_configs[combo - 1].condition)
            for source, values in (("real", data.rate), ("predicted", predicted)):
                rows.extend([combo, source, value, prob] for value, prob in empirical_cdf(values))
        return rows

    def run_evaluate(self) -> StageResult:
        """Train-size sweep of augmentation quality plus the compression-cost report."""
        config = self.config
        dataset = self._load_dataset()
        mapper = load_mapper(self.registry.require("mapper"))
        test = self._test_data(dataset)
        test_by_combo = test.by_combo()

        # 1. MMD sweep over training sizes and model tags
        sizes = list(config.dataset.train_sizes)
        if not sizes:
            logger.warning("No train_sizes configured; evaluating the configured train_size only")
            sizes = [config.dataset.train_size]
        rows = []
        for size in sizes:
            train, _ = self._training_data(dataset, size)
            space = PbmTransform.fit(train.pbm)
            reference = {c: space.transform(d.pbm) for c, d in test_by_combo.items()}
            for tag in config.evaluation.model_tags:
                farm = self.train_models(dataset, tag, size, derive_seed(config.augmenter.seed, size))
                candidate = {}
                for combo, data in test_by_combo.items():
                    count = config.dataset.aug_size or len(data)
                    seed = derive_seed(config.seed, STREAM_SWEEP, size, combo)
                    candidate[combo] = space.transform(
                        farm.generate(combo, self.probing_configs[combo - 1].condition, count, seed)
                    )
                provenance = Provenance.AUGMENTED if tag == ModelTag.CVAE_MDN else Provenance.BASELINE
                scores = mmd_per_combo(reference, candidate, config.evaluation.bandwidth, provenance)
                rows.extend([size, ModelTag(tag).value, combo, score] for combo, score in scores.items())
                logger.info("Sweep point done", extra={"fields": {"train_size": size, "tag": ModelTag(tag).value}})
        artifacts = {
            "mmd_sweep": self._report("reports/mmd-sweep.csv", ["train_size", "model_tag", "combo_index", "mmd"], rows),
            "cdf": self._report("reports/cdf.csv", ["combo_index", "source", "value", "probability"],
                                self._cdf_rows(test_by_combo, mapper)),
        }

        # 2. Compression cost: pipeline rate vs SBF over the whole codebook
        noise_power = float(dataset.metadata.get("noise_power", "nan"))
        params = self._pipeline_params(noise_power)
        locations = sorted(set(int(x) for x in test.location))
        full_rates = dict(zip(
            locations,
            self._map(lambda loc: full_beamspace_rate(self._location_channel(loc), params, config.scenario.geometry),
                      locations),
        ))
        full_mean = float(np.mean(list(full_rates.values()))) if full_rates else float("nan")
        bound = config.evaluation.compression_bound
        compression_rows = []
        ratios = {}
        for combo, data in sorted(test_by_combo.items()):
            reference = float(np.mean([full_rates[int(x)] for x in data.location]))
            pipeline_mean = float(data.rate.mean())
            if reference > 0:
                ratios[combo] = pipeline_mean / reference
            meets = combo in ratios and ratios[combo] >= bound
            compression_rows.append([combo, pipeline_mean, reference, ratios.get(combo, ""), meets])
        artifacts["compression"] = self._report(
            "reports/compression.csv",
            ["combo_index", "pipeline_mean_rate", "full_beamspace_mean_rate", "ratio", "meets_bound"],
            compression_rows,
        )
        best_combo = max(ratios, key=lambda c: (ratios[c], -c)) if ratios else None
        best_ratio = ratios[best_combo] if ratios else float("nan")
        bound_met = bool(ratios) and best_ratio >= bound
        if not bound_met:
            logger.warning(
                "Pipeline rate below the compression bound",
                extra={"fields": {"best_combo": best_combo, "ratio": best_ratio, "bound": bound}},
            )
        return self._result(
            "evaluate",
            artifacts,
            {"train_sizes": sizes, "model_tags": [ModelTag(t).value for t in config.evaluation.model_tags],
             "full_beamspace_mean_rate": full_mean,
             "beamspace_compression": 1.0 - config.pipeline.keep / config.pipeline.classes,
             "best_compression_combo": best_combo,
             "best_compression_ratio": best_ratio,
             "compression_bound": bound,
             "compression_bound_met": bound_met},
        )
