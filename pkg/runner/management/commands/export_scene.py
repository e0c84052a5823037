from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from runner.config import load_scenario
from runner.exceptions import ConfigError
from runner.scenario import plan_trials
from scene.builder import build_scene
from scene.exceptions import SceneError
from scene.exports import write_heightfield_csv


class Command(BaseCommand):
    help = "Write the heightfields of a scenario as CSV grids, one per distinct scene."

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="Scenario YAML file")
        parser.add_argument('--out', required=True, help="Output directory")
        parser.add_argument('--seed', type=int, help="Overrides the scenario seed")

    def handle(self, *args, **options):
        try:
            config = load_scenario(options['config'], {'seed': options['seed']})
        except ConfigError as exc:
            raise CommandError(f"invalid scenario\n{exc}")

        out = Path(options['out'])
        written = {}
        for trial in plan_trials(config):
            if trial.spec in written:
                continue
            try:
                hf = build_scene(trial.spec, config.scene_resolution)
            except SceneError as exc:
                raise CommandError(f"scene of trial {trial.label}: {exc}")
            written[trial.spec] = write_heightfield_csv(hf, out / f'scene_{trial.label}.csv')
            self.stdout.write(f"{written[trial.spec]} ({hf.cells_x} x {hf.cells_y} cells)")
        self.stdout.write(self.style.SUCCESS(f"exported {len(written)} scenes to {out}"))
