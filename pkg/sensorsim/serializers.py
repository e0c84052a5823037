# sensorsim/serializers.py
import math

from rest_framework import serializers

from sensorsim.models import CommandProfile, CommandSegment, DepthNoise, GaitParams


class DepthNoiseSerializer(serializers.Serializer):
    sigma0 = serializers.FloatField(min_value=0.0)
    k = serializers.FloatField(min_value=0.0)
    dropout = serializers.FloatField(min_value=0.0, max_value=1.0)

    def create(self, validated_data):
        return DepthNoise(**validated_data)


class CameraSerializer(serializers.Serializer):
    """Overrides on top of the front/rear presets; angles in degrees."""

    enabled = serializers.BooleanField(default=True)
    mount_translation = serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3,
                                              required=False)
    mount_rpy_deg = serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3,
                                          required=False)
    hfov_deg = serializers.FloatField(min_value=1.0, max_value=179.0, required=False)
    vfov_deg = serializers.FloatField(min_value=1.0, max_value=179.0, required=False)
    width = serializers.IntegerField(min_value=1, required=False)
    height = serializers.IntegerField(min_value=1, required=False)
    min_range = serializers.FloatField(min_value=0.0, required=False)
    max_range = serializers.FloatField(min_value=0.0, required=False)
    rate = serializers.FloatField(min_value=0.1, required=False)
    noise = DepthNoiseSerializer(required=False)
    noiseless = serializers.BooleanField(default=False)

    def validate(self, data):
        if 'min_range' in data and 'max_range' in data and data['min_range'] >= data['max_range']:
            raise serializers.ValidationError({'max_range': "Must exceed min_range."})
        return data

    def build(self, data, preset):
        overrides = {}
        for name in ('mount_translation', 'width', 'height', 'min_range', 'max_range', 'rate'):
            if name in data:
                overrides[name] = tuple(data[name]) if isinstance(data[name], list) else data[name]
        if 'mount_rpy_deg' in data:
            overrides['mount_rpy'] = tuple(math.radians(a) for a in data['mount_rpy_deg'])
        for name in ('hfov', 'vfov'):
            if f'{name}_deg' in data:
                overrides[name] = math.radians(data[f'{name}_deg'])
        if 'noise' in data:
            overrides['noise'] = DepthNoise(**data['noise'])
        if data.get('noiseless'):
            overrides['noise'] = DepthNoise()
        return preset(**overrides)


class CommandSegmentSerializer(serializers.Serializer):
    vx = serializers.FloatField(default=0.0)
    vy = serializers.FloatField(default=0.0)
    wz = serializers.FloatField(default=0.0)
    duration = serializers.FloatField(min_value=1e-3)


class CommandProfileSerializer(serializers.Serializer):
    segments = CommandSegmentSerializer(many=True, allow_empty=False)

    def create(self, validated_data):
        return CommandProfile(segments=tuple(CommandSegment(**s) for s in validated_data['segments']))


class GaitSerializer(serializers.Serializer):
    frequency = serializers.FloatField(min_value=0.1, default=2.0)
    thigh_amplitude = serializers.FloatField(default=0.3)
    calf_amplitude = serializers.FloatField(default=0.5)
    trunk_height = serializers.FloatField(min_value=0.05, required=False)
    height_time_constant = serializers.FloatField(min_value=0.0, default=0.05)
    pitch_time_constant = serializers.FloatField(min_value=0.0, default=0.1)
    velocity_time_constant = serializers.FloatField(min_value=0.0, default=0.0)
    sway_amplitude = serializers.FloatField(min_value=0.0, default=0.0)
    phase_jitter = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)

    def create(self, validated_data):
        return GaitParams(**validated_data)
