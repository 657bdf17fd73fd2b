from django.apps import AppConfig


class RelayDelayConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'relay_delay'
    verbose_name = 'Relay buffer delay'
