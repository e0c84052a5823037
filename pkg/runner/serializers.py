# runner/serializers.py
from collections.abc import Mapping
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from cloudfilter.models import FILTER_STAGES, FilterParams
from obsbuilder.models import HISTORY_LENGTH
from obsbuilder.serializers import ObservationSerializer
from odometry.serializers import OdometrySerializer
from reward.serializers import RewardSerializer
from runner.models import SCENARIO_KINDS, MappingSettings, ObservationSettings, Rates, ScenarioConfig
from scene.serializers import SceneSpecSerializer
from sensorsim.models import CameraModel
from sensorsim.serializers import CameraSerializer, CommandProfileSerializer, GaitSerializer

KIND_PRESETS = {'custom': 'custom', 'step_sweep': 'step', 'obstacle': 'obstacle', 'tracking_sweep': 'flat'}


def perception(name):
    """Default read from ``settings.PERCEPTION`` when the field is validated."""
    return lambda: settings.PERCEPTION[name]


def with_sections(data, names):
    # DRF hands a missing nested section its default as is, skipping the nested defaults
    if not isinstance(data, Mapping):
        return data
    data = dict(data)
    for name in names:
        if data.get(name) is None:
            data[name] = {}
    return data


class CamerasSerializer(serializers.Serializer):
    front = CameraSerializer()
    rear = CameraSerializer()

    def to_internal_value(self, data):
        return super().to_internal_value(with_sections(data, ('front', 'rear')))

    def validate(self, data):
        if not (data['front']['enabled'] or data['rear']['enabled']):
            raise serializers.ValidationError("At least one camera must stay enabled.")
        return data

    def build(self, data) -> tuple:
        """Enabled cameras, front first."""
        cameras = []
        for name, preset in (('front', CameraModel.front_stereo), ('rear', CameraModel.rear_tof)):
            if data[name]['enabled']:
                cameras.append(CameraSerializer().build(data[name], preset))
        return tuple(cameras)


class MappingSerializer(serializers.Serializer):
    resolution = serializers.FloatField(min_value=1e-3, default=perception('MAP_RESOLUTION'))
    length = serializers.FloatField(min_value=0.1, max_value=5.0, default=perception('MAP_LENGTH'))
    drift_compensation = serializers.BooleanField(default=True)
    drift_gate = serializers.FloatField(min_value=0.0, default=perception('DRIFT_GATE'))
    drift_min_points = serializers.IntegerField(min_value=1, default=perception('DRIFT_MIN_POINTS'))
    drift_flatness = serializers.FloatField(min_value=0.0, default=perception('DRIFT_FLATNESS'))

    def create(self, validated_data):
        return MappingSettings(**validated_data)


class FilterSerializer(serializers.Serializer):
    order = serializers.ListField(child=serializers.ChoiceField(choices=FILTER_STAGES), max_length=3,
                                  default=lambda: list(settings.PERCEPTION['FILTER_ORDER']))
    neighbors = serializers.IntegerField(min_value=1, default=perception('SOR_NEIGHBORS'))
    std_ratio = serializers.FloatField(min_value=0.0, default=perception('SOR_STD_RATIO'))
    voxel_size = serializers.FloatField(min_value=1e-3, default=perception('VOXEL_SIZE'))
    body_margin = serializers.FloatField(min_value=0.0, default=perception('BODY_MARGIN'))

    def validate_order(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Each filter stage may appear once.")
        return value

    def create(self, validated_data):
        data = dict(validated_data)
        return FilterParams(order=tuple(data.pop('order')), **data)


class ScenarioSerializer(serializers.Serializer):
    """A scenario file. Sections left out take their module defaults."""

    SECTIONS = ('scene', 'cameras', 'gait', 'odometry', 'observation', 'reward', 'mapping', 'filters')

    name = serializers.CharField(default='scenario')
    kind = serializers.ChoiceField(choices=SCENARIO_KINDS, default='custom')
    seed = serializers.IntegerField(min_value=0)
    out = serializers.CharField(required=False)
    duration = serializers.FloatField(min_value=0.1, required=False)
    distance = serializers.FloatField(min_value=0.1, default=4.0)
    speed = serializers.FloatField(default=0.5)
    heights = serializers.ListField(child=serializers.FloatField(min_value=0.0), allow_empty=False,
                                    default=lambda: [0.075, 0.10, 0.125, 0.15, 0.175, 0.20, 0.225, 0.25, 0.275])
    speeds = serializers.ListField(child=serializers.FloatField(), allow_empty=False, default=lambda: [0.5, 1.0])
    tracking_segment = serializers.FloatField(min_value=0.1, default=2.0)
    settle = serializers.FloatField(min_value=0.0, default=0.7)
    start = serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3,
                                  default=lambda: [1.0, 0.0, 0.0])
    snapshot_every = serializers.FloatField(min_value=1e-3, required=False, allow_null=True)
    success_chamfer_cm = serializers.FloatField(min_value=0.0, default=perception('SUCCESS_CHAMFER_CM'))
    workers = serializers.IntegerField(min_value=1, default=perception('RENDER_WORKERS'))

    scene = SceneSpecSerializer()
    commands = CommandProfileSerializer(required=False)
    cameras = CamerasSerializer()
    gait = GaitSerializer()
    odometry = OdometrySerializer()
    observation = ObservationSerializer()
    reward = RewardSerializer()
    mapping = MappingSerializer()
    filters = FilterSerializer()

    def to_internal_value(self, data):
        data = with_sections(data, self.SECTIONS)
        if isinstance(data, Mapping) and isinstance(data['scene'], Mapping) and 'preset' not in data['scene']:
            preset = KIND_PRESETS.get(data.get('kind', 'custom'), 'custom')
            data['scene'] = {**data['scene'], 'preset': preset}
        return super().to_internal_value(data)

    def validate_speeds(self, value):
        if any(abs(v) < 1e-6 for v in value):
            raise serializers.ValidationError("Sweep speeds must be nonzero.")
        return value

    def validate(self, data):
        if data['kind'] == 'custom' and 'commands' not in data and 'duration' not in data:
            raise serializers.ValidationError({'duration': "A custom scenario needs commands or a duration."})
        if data['kind'] == 'step_sweep':
            if data['scene']['preset'] != 'step':
                raise serializers.ValidationError({'scene': {'preset': "A step sweep builds step scenes."}})
            if abs(data['speed']) < 1e-6:
                raise serializers.ValidationError({'speed': "The step sweep needs a nonzero speed."})
        return data

    def create(self, validated_data):
        data = validated_data
        perception_defaults = settings.PERCEPTION
        odometry_model, ekf = self.fields['odometry'].build(data['odometry'], perception_defaults['INNOVATION_GATE'])
        observation = data['observation']
        gait = dict(data['gait'])
        gait.setdefault('trunk_height', perception_defaults['TRUNK_HEIGHT'])
        reward = dict(data['reward'])
        reward.setdefault('trunk_height_default', gait['trunk_height'])
        return ScenarioConfig(
            name=data['name'],
            kind=data['kind'],
            seed=data['seed'],
            scene=data['scene'],
            scene_resolution=data['scene'].get('resolution', perception_defaults['SCENE_RESOLUTION']),
            cameras=self.fields['cameras'].build(data['cameras']),
            gait=self.fields['gait'].create(gait),
            odometry_mode=data['odometry']['mode'],
            odometry_model=odometry_model,
            ekf=ekf,
            z_drift_rate=data['odometry']['z_drift_rate'],
            observation=ObservationSettings(
                noise=self.fields['observation'].create(observation),
                default_height=observation.get('default_height', -gait['trunk_height']),
                history=HISTORY_LENGTH if observation['history'] else 1,
                blind=observation['blind'],
                dump=observation['dump'],
            ),
            reward=self.fields['reward'].create(reward),
            filters=self.fields['filters'].create(data['filters']),
            mapping=self.fields['mapping'].create(data['mapping']),
            out=Path(data.get('out') or Path(perception_defaults['OUTPUT_DIR']) / data['name']),
            commands=self.fields['commands'].create(data['commands']) if 'commands' in data else None,
            duration=data.get('duration'),
            distance=data['distance'],
            speed=data['speed'],
            heights=tuple(data['heights']),
            speeds=tuple(data['speeds']),
            tracking_segment=data['tracking_segment'],
            settle=data['settle'],
            start=tuple(data['start']),
            snapshot_every=data.get('snapshot_every'),
            success_chamfer_cm=data['success_chamfer_cm'],
            region=tuple(perception_defaults['REGION_SIZE']),
            rates=Rates(
                sim=perception_defaults['SIM_RATE'],
                control=perception_defaults['CONTROL_RATE'],
                cloud=perception_defaults['CLOUD_RATE'],
                chamfer=perception_defaults['CHAMFER_RATE'],
                estimator=perception_defaults['ESTIMATOR_RATE'],
                imu=perception_defaults['IMU_RATE'],
                vio=perception_defaults['VIO_RATE'],
            ),
            workers=data['workers'],
        )
