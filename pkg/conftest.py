import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Legged_perception.settings')
django.setup()
