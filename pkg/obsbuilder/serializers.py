# obsbuilder/serializers.py
from rest_framework import serializers

from obsbuilder.models import HeightNoiseState


class ObservationSerializer(serializers.Serializer):
    default_height = serializers.FloatField(required=False)
    sample_sigma = serializers.FloatField(min_value=0.0, default=HeightNoiseState.sample_sigma)
    bias_sigma = serializers.ListField(child=serializers.FloatField(min_value=0.0), min_length=3, max_length=3,
                                       default=lambda: list(HeightNoiseState.bias_sigma))
    bias_period = serializers.FloatField(default=HeightNoiseState.period)
    height_bias = serializers.BooleanField(default=True)
    history = serializers.BooleanField(default=True)
    blind = serializers.BooleanField(default=False)
    dump = serializers.BooleanField(default=False)

    def validate_bias_period(self, value):
        if value <= 0:
            raise serializers.ValidationError("Bias period must be positive.")
        return value

    def create(self, validated_data):
        """Fresh noise state for one run."""
        bias_sigma = validated_data['bias_sigma'] if validated_data['height_bias'] else (0.0, 0.0, 0.0)
        return HeightNoiseState(sample_sigma=validated_data['sample_sigma'], bias_sigma=tuple(bias_sigma),
                                period=validated_data['bias_period'])
