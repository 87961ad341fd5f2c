import argparse
import logging
import sys
import traceback
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from intentpool.config import PipelineConfig
from intentpool.core.errors import IntentPoolError
from intentpool.harness import STAGES, Pipeline, StageResult

logger = logging.getLogger(__name__)

COMMANDS = STAGES + ("pipeline",)


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand's unset flag from masking one given before the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=argparse.SUPPRESS, help="Pipeline configuration JSON file.")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Base seed every named seed derives from.")
    common.add_argument("--out", type=str, default=argparse.SUPPRESS, help="Output directory of the run.")
    common.add_argument("--gamma", type=float, default=argparse.SUPPRESS, help="Discount of the aggregated rewards.")
    common.add_argument("--epsilon", type=float, default=argparse.SUPPRESS, help="SplitScore threshold.")
    common.add_argument("--tau", type=int, default=argparse.SUPPRESS, help="Consecutive cuts that must stay below epsilon.")
    common.add_argument("--k-max", type=int, default=argparse.SUPPRESS, help="Largest granularity swept.")
    common.add_argument(
        "--embedder", choices=("hash", "remote"), default=argparse.SUPPRESS, help="Embedding backend."
    )
    common.add_argument(
        "--force", action="store_true", default=argparse.SUPPRESS, help="Re-run stages even when their manifest is current."
    )
    common.add_argument(
        "--log-level",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        default=argparse.SUPPRESS,
        help="Console and pipeline.log verbosity.",
    )
    return common


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="intentpool",
        description="Cluster dialogue utterances into intentions and train policies on intention-aggregated rewards.",
        parents=[common],
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "collect": "Roll out games and log their trajectories.",
        "embed": "Embed every utterance of the trajectory log.",
        "cluster": "Build the average-linkage dendrogram and sweep clustering metrics.",
        "select-k": "Sweep SplitScore and select the granularity k*.",
        "aggregate": "Cut at k*, build the reward table and per-step advantages.",
        "train": "Offline REINFORCE under every advantage mode.",
        "train-online": "Online REINFORCE against the reward-table oracle.",
        "eval": "Evaluate the untrained and trained policies.",
        "report": "Write the CSV bundle and the plain-text summary.",
        "pipeline": "Run every stage in order.",
    }
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], help=helps[command])
    return parser.parse_args(argv)


def load_config(args: argparse.Namespace) -> PipelineConfig:
    config_path = getattr(args, "config", None)
    config = PipelineConfig.from_json_file(config_path) if config_path else PipelineConfig()
    config.apply_overrides(
        seed=getattr(args, "seed", None),
        out=getattr(args, "out", None),
        gamma=getattr(args, "gamma", None),
        epsilon=getattr(args, "epsilon", None),
        tau=getattr(args, "tau", None),
        k_max=getattr(args, "k_max", None),
        embedder=getattr(args, "embedder", None),
    )
    config.load_credentials()
    return config.validate()


def _format_results(results: List[StageResult]) -> None:
    print("\n===== PIPELINE STAGES =====")
    for r in results:
        status = "skipped (up to date)" if r.skipped else f"done in {r.elapsed:.2f}s"
        print(f"{r.stage:<13} {status}, {len(r.outputs)} outputs")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    level = getattr(logging, getattr(args, "log_level", "INFO"))
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    load_dotenv()

    try:
        config = load_config(args)
        pipeline = Pipeline(config, force=getattr(args, "force", False), logging_level=level)
        stages = STAGES if args.command == "pipeline" else (args.command,)
        results = pipeline.run(stages)
    except IntentPoolError as e:
        logger.error(f"{type(e).__name__}: {e}\n{traceback.format_exc()}")
        print(f"intentpool {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected {type(e).__name__}: {e}\n{traceback.format_exc()}")
        print(f"intentpool {args.command}: unexpected {type(e).__name__}: {e}", file=sys.stderr)
        return 4

    _format_results(results)
    return 0


if __name__ == "__main__":
    sys.exit(main())
