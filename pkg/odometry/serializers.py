# odometry/serializers.py
from rest_framework import serializers

from odometry.models import (ODOMETRY_MODES, EkfParams, EstimatorNoise, ImuNoise, SourceErrorModel,
                             VioNoise)


def vector(length=3, **kwargs):
    return serializers.ListField(child=serializers.FloatField(), min_length=length, max_length=length, **kwargs)


class EstimatorNoiseSerializer(serializers.Serializer):
    sigma = vector(default=list(EstimatorNoise.sigma))
    bias = vector(default=list(EstimatorNoise.bias))

    def validate_sigma(self, value):
        if min(value) < 0:
            raise serializers.ValidationError("Noise sigmas must be non-negative.")
        return value


class ImuNoiseSerializer(serializers.Serializer):
    orientation_sigma = serializers.FloatField(min_value=0.0, default=ImuNoise.orientation_sigma)
    angular_velocity_sigma = serializers.FloatField(min_value=0.0, default=ImuNoise.angular_velocity_sigma)


class VioNoiseSerializer(serializers.Serializer):
    random_walk = serializers.FloatField(min_value=0.0, default=VioNoise.random_walk)
    sigma = serializers.FloatField(min_value=0.0, default=VioNoise.sigma)
    dropouts = serializers.ListField(child=vector(2), default=list)

    def validate_dropouts(self, value):
        for start, end in value:
            if end < start:
                raise serializers.ValidationError(f"Dropout [{start}, {end}] ends before it starts.")
        return value


class OdometrySerializer(serializers.Serializer):
    mode = serializers.ChoiceField(choices=ODOMETRY_MODES, default='ekf-vio')
    z_drift_rate = serializers.FloatField(default=0.0)
    estimator = EstimatorNoiseSerializer(default=dict)
    imu = ImuNoiseSerializer(default=dict)
    vio = VioNoiseSerializer(default=dict)
    noiseless = serializers.BooleanField(default=False)
    innovation_gate = serializers.FloatField(min_value=0.0, required=False)
    velocity_sigma = vector(required=False)
    position_sigma = vector(required=False)

    def build(self, data, gate: float):
        """(SourceErrorModel, EkfParams) from validated data."""
        if data['noiseless']:
            model = SourceErrorModel.noiseless()
        else:
            estimator, imu, vio = (data.get(key) or {} for key in ('estimator', 'imu', 'vio'))
            model = SourceErrorModel(
                estimator=EstimatorNoise(sigma=tuple(estimator.get('sigma', EstimatorNoise.sigma)),
                                         bias=tuple(estimator.get('bias', EstimatorNoise.bias))),
                imu=ImuNoise(**imu),
                vio=VioNoise(random_walk=vio.get('random_walk', VioNoise.random_walk),
                             sigma=vio.get('sigma', VioNoise.sigma),
                             dropouts=tuple(tuple(d) for d in vio.get('dropouts', ()))),
            )
        params = {'gate': data.get('innovation_gate', gate)}
        for name in ('velocity_sigma', 'position_sigma'):
            if name in data:
                params[name] = tuple(data[name])
        return model, EkfParams(**params)
