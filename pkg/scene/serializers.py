# scene/serializers.py
from rest_framework import serializers

from scene.exceptions import SceneError
from scene.models import FlatRegion, Platform, SceneSpec, Step

REQUIRED_FIELDS = {
    'flat': ['z'],
    'step': ['x_start', 'height', 'depth'],
    'platform': ['x_start', 'rise_steps', 'platform_height', 'platform_length', 'ramp_slope'],
}


class PrimitiveSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=list(REQUIRED_FIELDS))
    z = serializers.FloatField(required=False)
    x_start = serializers.FloatField(required=False)
    length = serializers.FloatField(required=False, min_value=0.0)
    height = serializers.FloatField(required=False, min_value=0.0)
    depth = serializers.FloatField(required=False, min_value=0.0)
    rise_steps = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(min_value=0.0), min_length=2, max_length=2),
        required=False,
    )
    platform_height = serializers.FloatField(required=False, min_value=0.0)
    platform_length = serializers.FloatField(required=False, min_value=0.0)
    ramp_slope = serializers.FloatField(required=False, min_value=0.0)

    def validate(self, data):
        missing = [name for name in REQUIRED_FIELDS[data['kind']] if name not in data]
        if missing:
            raise serializers.ValidationError({name: "This field is required for a %s." % data['kind'] for name in missing})
        return data

    def to_primitive(self, data):
        kind = data['kind']
        if kind == 'flat':
            return FlatRegion(z=data['z'], x_start=data.get('x_start'), length=data.get('length'))
        if kind == 'step':
            return Step(x_start=data['x_start'], height=data['height'], depth=data['depth'])
        return Platform(
            x_start=data['x_start'],
            rise_steps=tuple(tuple(step) for step in data['rise_steps']),
            platform_height=data['platform_height'],
            platform_length=data['platform_length'],
            ramp_slope=data['ramp_slope'],
        )


class SceneSpecSerializer(serializers.Serializer):
    preset = serializers.ChoiceField(choices=['custom', 'flat', 'step', 'obstacle'], default='custom')
    primitives = PrimitiveSerializer(many=True, required=False)
    extent = serializers.ListField(child=serializers.FloatField(), min_length=4, max_length=4,
                                   default=[0.0, 6.0, -1.5, 1.5])
    base_height = serializers.FloatField(default=0.0)
    resolution = serializers.FloatField(required=False, min_value=1e-4)
    obstacle_x = serializers.FloatField(default=2.0)

    def validate(self, data):
        if data['preset'] == 'custom' and not data.get('primitives'):
            raise serializers.ValidationError({'primitives': "A custom scene needs at least one primitive."})
        if data['preset'] == 'custom':
            try:
                self.create(data).validate()
            except SceneError as exc:
                raise serializers.ValidationError({'primitives': str(exc)})
        return data

    def create(self, validated_data):
        """Build the SceneSpec of a custom scene; presets are expanded by the runner."""
        x_min, x_max, y_min, y_max = validated_data['extent']
        primitive_serializer = PrimitiveSerializer()
        primitives = tuple(primitive_serializer.to_primitive(p) for p in validated_data.get('primitives', []))
        return SceneSpec(primitives=primitives, x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max,
                         base_height=validated_data['base_height'])
