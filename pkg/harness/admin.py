from django.contrib import admin
from django.utils.html import format_html

from .models import SweepRun


@admin.register(SweepRun)
class SweepRunAdmin(admin.ModelAdmin):
    list_display = ['experiment', 'seed', 'row_count_display', 'outcome_display', 'output_path', 'created_at']
    list_filter = ['experiment', 'passed', 'created_at']
    search_fields = ['seed', 'output_path']
    readonly_fields = ['config', 'columns', 'rows', 'version', 'created_at']

    def row_count_display(self, obj):
        return obj.row_count
    row_count_display.short_description = 'Rows'

    def outcome_display(self, obj):
        if not obj.is_validation():
            return "-"
        if obj.passed:
            return format_html('<span style="color: green;">Passed</span>')
        return format_html('<span style="color: red;">{} mismatch(es)</span>', obj.mismatch_count)
    outcome_display.short_description = 'Outcome'
