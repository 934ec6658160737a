from .gradcheck import COMPONENTS, TOLERANCE, GradCheckError, grad_check, grad_check_all
from .loop import TrainConfig, TrainingError, batch_indices, build_model, evaluate, sgd, train, train_step
from .loss import LossConfig, NumericError, SurrogateReport, composite_loss
from .tasks import DIRECTIONS, ToyTask, ToyTaskConfig, make_task, motion_frame
from .toy import ToyEchoModel, ToyMotionModel
