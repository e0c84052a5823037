from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from evaluation.exceptions import MetricError
from runner.compare import compare_runs


class Command(BaseCommand):
    help = "Side-by-side metric means of two or more runs, with percent deltas against the first."

    def add_arguments(self, parser):
        parser.add_argument('reports', nargs='+', help="Run directories or metrics.json files")
        parser.add_argument('--out', help="Also write the table to this CSV file")

    def handle(self, *args, **options):
        try:
            table = compare_runs(options['reports'])
        except MetricError as exc:
            raise CommandError(str(exc))

        if options['out']:
            path = Path(options['out'])
            path.parent.mkdir(parents=True, exist_ok=True)
            table.to_csv(path, index_label='metric', float_format='%.6g')
        self.stdout.write(table.to_string(float_format=lambda v: f'{v:.4f}', na_rep='-'))
