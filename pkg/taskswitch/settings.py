from pathlib import Path
from decouple import config

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config("SECRET_KEY", default="your-default-secret-key-for-dev-only")
DEBUG = config("DEBUG", default=False, cast=bool)
ALLOWED_HOSTS = []

IARC_APPS = [
    "common",
    "streams",
    "autodiff",
    "networks",
    "training",
    "experiments",
]

INSTALLED_APPS = [
    "common.apps.CommonConfig",
    "streams.apps.StreamsConfig",
    "autodiff.apps.AutodiffConfig",
    "networks.apps.NetworksConfig",
    "training.apps.TrainingConfig",
    "experiments.apps.ExperimentsConfig",
]

# Everything is file based: no database, no web surface.
DATABASES = {}

USE_TZ = True
TIME_ZONE = "UTC"
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

IARC_OUTPUT_DIR = Path(config("IARC_OUTPUT_DIR", default=str(BASE_DIR / "runs")))
IARC_DEFAULT_SEED = config("IARC_DEFAULT_SEED", default=7, cast=int)
IARC_RUN_SLOW_TESTS = config("IARC_RUN_SLOW_TESTS", default=False, cast=bool)

CELERY_BROKER_URL = config("CELERY_BROKER_URL", default="memory://")
CELERY_RESULT_BACKEND = config("CELERY_RESULT_BACKEND", default="cache+memory://")
CELERY_TASK_ALWAYS_EAGER = config("CELERY_TASK_ALWAYS_EAGER", default=True, cast=bool)
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_TASK_TRACK_STARTED = True
CELERY_ACCEPT_CONTENT = ["json"]
CELERY_TASK_SERIALIZER = "json"
CELERY_RESULT_SERIALIZER = "json"
CELERY_TIMEZONE = "UTC"
CELERY_TASK_ROUTES = {
    "training.tasks.*": {"queue": "training"},
}

LOG_LEVEL = config("LOG_LEVEL", default="INFO")
LOG_DIR = Path(config("LOG_DIR", default=str(BASE_DIR / "logs")))
LOG_DIR.mkdir(parents=True, exist_ok=True)
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {module} {message}",
            "style": "{",
        },
        "simple": {
            "format": "{levelname} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "file": {
            "level": "INFO",
            "class": "logging.handlers.RotatingFileHandler",
            "filename": LOG_DIR / "iarc.log",
            "maxBytes": 1024 * 1024 * 10,
            "backupCount": 5,
            "formatter": "verbose",
        },
        "console": {
            "level": "DEBUG",
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "loggers": {
        "django": {
            "handlers": ["file", "console"],
            "level": "INFO",
            "propagate": True,
        },
        **{
            name: {
                "handlers": ["file", "console"],
                "level": LOG_LEVEL,
                "propagate": False,
            }
            for name in IARC_APPS
        },
    },
}
