from django.apps import AppConfig


class TrainingConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'training'
    verbose_name = 'Training harness'

    def ready(self):
        # register the Celery tasks
        import training.tasks  # noqa F401
