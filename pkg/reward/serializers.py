# reward/serializers.py
from rest_framework import serializers

from reward.models import TERMS, RewardWeights


class RewardSerializer(serializers.Serializer):
    weights = serializers.DictField(child=serializers.FloatField(), default=dict)
    tracking_sigma = serializers.FloatField(default=RewardWeights.tracking_sigma)
    air_time_target = serializers.FloatField(min_value=0.0, default=RewardWeights.air_time_target)
    negative_scale = serializers.FloatField(default=RewardWeights.negative_scale)
    trunk_height_default = serializers.FloatField(required=False)

    def validate_weights(self, value):
        unknown = sorted(set(value) - set(TERMS))
        if unknown:
            raise serializers.ValidationError(f"Unknown reward terms: {', '.join(unknown)}.")
        return value

    def validate(self, data):
        if not data['tracking_sigma'] > 0:
            raise serializers.ValidationError({'tracking_sigma': "Must be positive."})
        if not 0.0 < data['negative_scale'] <= 1.0:
            raise serializers.ValidationError({'negative_scale': "Must lie in (0, 1]."})
        return data

    def create(self, validated_data):
        data = dict(validated_data)
        return RewardWeights(**data.pop('weights'), **data)
