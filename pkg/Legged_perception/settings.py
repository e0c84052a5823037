from pathlib import Path
import os

from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Django refuses to start without a key; nothing here is signed or served.
SECRET_KEY = os.getenv('SECRET_KEY', 'legged-perception-offline')
DEBUG = os.getenv('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'rest_framework',

    # my apps
    'scene',
    'sensorsim',
    'cloudfilter',
    'elevmap',
    'odometry',
    'obsbuilder',
    'reward',
    'evaluation',
    'runner',
]

# The simulator keeps no database state; runs are written to the output directory.
DATABASES = {}

# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        app: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for app in INSTALLED_APPS[1:]
    },
}

REST_FRAMEWORK = {
    # Serializers are used for config and report validation only.
    'UNAUTHENTICATED_USER': None,
}

# Simulation defaults. Scenario files override these per run, CLI flags override both.
PERCEPTION = {
    'OUTPUT_DIR': os.getenv('PERCEPTION_OUTPUT_DIR', str(BASE_DIR / 'runs')),

    # scene
    'SCENE_RESOLUTION': 0.0175,
    'GT_PATCH_RESOLUTION': 0.0175,
    'REGION_SIZE': (0.5, 0.3),
    'TRUNK_HEIGHT': 0.30,

    # rates [Hz]
    'SIM_RATE': 200.0,
    'CONTROL_RATE': 50.0,
    'CLOUD_RATE': 30.0,
    'CHAMFER_RATE': 20.0,
    'ESTIMATOR_RATE': 50.0,
    'IMU_RATE': 200.0,
    'VIO_RATE': 90.0,

    # cloud filters
    'FILTER_ORDER': ('outliers', 'body', 'voxel'),
    'SOR_NEIGHBORS': 8,
    'SOR_STD_RATIO': 2.0,
    'VOXEL_SIZE': 0.025,
    'BODY_MARGIN': 0.02,

    # elevation map
    'MAP_RESOLUTION': 0.025,
    'MAP_LENGTH': 5.0,
    'DRIFT_GATE': 0.10,
    'DRIFT_MIN_POINTS': 20,
    'DRIFT_FLATNESS': 0.03,

    # odometry
    'INNOVATION_GATE': 9.0,

    # runner
    'SUCCESS_CHAMFER_CM': 3.0,
    'RENDER_WORKERS': 2,
}
