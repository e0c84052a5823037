# evaluation/serializers.py
import math

from rest_framework import serializers

from evaluation.models import MetricReport


class MetricReportSerializer(serializers.Serializer):
    metric = serializers.CharField()
    label = serializers.CharField(allow_blank=True, default='')
    units = serializers.CharField(allow_blank=True)
    tags = serializers.DictField(child=serializers.CharField(allow_blank=True), default=dict)
    values = serializers.ListField(child=serializers.FloatField())
    missing = serializers.IntegerField(min_value=0, default=0)
    mean = serializers.SerializerMethodField()

    def get_mean(self, report):
        # JSON has no NaN
        mean = report.mean
        return None if math.isnan(mean) else mean

    def create(self, validated_data):
        return MetricReport(**validated_data)
