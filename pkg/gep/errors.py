"""엔진 전역 예외 계층.

차원 연산의 ``Undefined`` 결과와 수치 도메인 위반(NaN)은 예외가 아니라 값이다.
여기 정의된 예외는 설정/입력 오류와 복구 불가능한 호출 오류에만 쓴다.
"""


class GepError(Exception):
    """모든 엔진 예외의 기반 클래스"""


class OperationFailed(GepError):
    """handle_error 가 일반 예외를 감쌀 때 사용"""


# ============================================================================
# 차원 대수
# ============================================================================

class DimensionError(GepError):
    pass


class UnknownOperatorError(DimensionError):
    pass


class NonInvertibleError(DimensionError):
    pass


class UnitParseError(DimensionError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (위치 {position})")
        self.position = position


# ============================================================================
# 유전체 / 진화
# ============================================================================

class GenomeError(GepError):
    pass


class InvalidGeneError(GenomeError):
    pass


class GeneCapacityError(GenomeError):
    pass


class EvolutionError(GepError):
    pass


# ============================================================================
# 평가 / 벤치마크 / 설정
# ============================================================================

class FitnessError(GepError):
    pass


class FeatureIndexError(FitnessError):
    pass


class MetricError(GepError):
    pass


class ExpressionSyntaxError(GepError):
    pass


class ConfigurationError(GepError):
    pass


class LibraryCacheError(GepError):
    pass


class SchemaMismatchError(GepError):
    pass
