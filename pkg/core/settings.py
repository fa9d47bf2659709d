from dotenv import load_dotenv
from pathlib import Path
import os

load_dotenv()
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "arb-local-only")
DEBUG = os.environ.get("DEBUG", "False").lower() == "true"

ALLOWED_HOSTS = []

# Application definition
REST_FRAMEWORK_APPS = [
    "rest_framework",
]

CORE_APPS = [
    "graphs",
    "propagation",
    "evaluation",
    "datasets",
    "cli",
]

INSTALLED_APPS = REST_FRAMEWORK_APPS + CORE_APPS

MIDDLEWARE = []

# No app keeps models; the commands read and write plain files.
DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True



REST_FRAMEWORK = {
    "COERCE_DECIMAL_TO_STRING": False,
    "UNAUTHENTICATED_USER": None,
}


# Propagation engine settings
ARB_THREADS = int(os.environ.get("ARB_THREADS", "1"))
ARB_DENSE_LIMIT = int(os.environ.get("ARB_DENSE_LIMIT", "2000"))

ARB_DEFAULTS = {
    "ALPHA": float(os.environ.get("ARB_ALPHA", "0.5")),
    "BETA": float(os.environ.get("ARB_BETA", "0.5")),
    "MAX_ITERS": int(os.environ.get("ARB_MAX_ITERS", "40")),
    "TOLERANCE": float(os.environ.get("ARB_TOLERANCE", "1e-7")),
    "K_LIST": [10, 20, 50],
    "RATES": [0.4, 0.6, 0.8, 0.9, 0.99],
    "KNOWN_FRACTION": 0.4,
    "VAL_TEST_RATIO": (1, 5),
    "SEARCH_STEP": 0.25,
    "SEARCH_MIN_STEP": 1 / 64,
    "SEARCH_MAX_EVALS": 200,
    "BENCH_ITERS": 20,
    "BENCH_REPEATS": 5,
    "CV_FOLDS": 5,
    "DEPTHS": list(range(1, 11)),
    "GRID": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
}


# Logging
ARB_LOG_LEVEL = os.environ.get("ARB_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
            "stream": "ext://sys.stderr",
        },
    },
    "loggers": {
        app: {
            "handlers": ["console"],
            "level": ARB_LOG_LEVEL,
            "propagate": False,
        }
        for app in CORE_APPS
    },
}
