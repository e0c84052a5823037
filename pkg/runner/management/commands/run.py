import logging
import math

from django.core.management.base import BaseCommand, CommandError

from odometry.models import ODOMETRY_MODES
from runner.config import load_scenario
from runner.exceptions import ConfigError, RunError
from runner.scenario import run_scenario

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Run a perception scenario and write metrics.csv, metrics.json and the trial logs."

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="Scenario YAML file")
        parser.add_argument('--seed', type=int, help="Overrides the scenario seed")
        parser.add_argument('--out', help="Output directory; defaults to PERCEPTION_OUTPUT_DIR/<name>")
        parser.add_argument('--no-rear-camera', action='store_true', help="Run with the front camera only")
        parser.add_argument('--odometry', choices=ODOMETRY_MODES, help="Odometry source for mapping")
        parser.add_argument('--snapshot-every', type=float, metavar='SECONDS',
                            help="Write map and cloud snapshots at this interval")
        parser.add_argument('--no-progress', action='store_true', help="Hide the progress bar")

    def handle(self, *args, **options):
        overrides = {
            'seed': options['seed'],
            'out': options['out'],
            'odometry.mode': options['odometry'],
            'snapshot_every': options['snapshot_every'],
        }
        if options['no_rear_camera']:
            overrides['cameras.rear.enabled'] = False

        try:
            config = load_scenario(options['config'], overrides)
        except ConfigError as exc:
            raise CommandError(f"invalid scenario\n{exc}")

        try:
            result = run_scenario(config, progress=not options['no_progress'])
        except (RunError, ValueError, ArithmeticError) as exc:
            logger.error("scenario %s failed: %s", config.name, exc, exc_info=True)
            raise CommandError(f"scenario {config.name} failed: {exc}")

        for report in result.reports:
            mean = 'n/a' if math.isnan(report.mean) else f'{report.mean:.4f}'
            self.stdout.write(f"{report.key:<32} {mean:>10} {report.units}")
        self.stdout.write(self.style.SUCCESS(f"{config.name}: wrote {len(result.artifacts)} files to {config.out}"))
