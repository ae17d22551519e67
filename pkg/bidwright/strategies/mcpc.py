from bidwright.core.exceptions import NoClicks
from bidwright.strategies.fit import StrategyFit


def fit_mcpc(dataset):
    """
    Max effective CPC: historical train cost per click.

    :param CampaignDataset dataset: Campaign with its train aggregates.
    :raises NoClicks: When the train period holds no click.
    :rtype: StrategyFit
    """
    if dataset.total_train_clicks <= 0:
        raise NoClicks(f"campaign '{dataset.campaign_id}' has no train clicks, MCPC is undefined")
    max_cpc = dataset.total_train_cost / dataset.total_train_clicks
    return StrategyFit(kind='MCPC', lambda_base=max_cpc,
                       meta={'max_cpc': max_cpc, 'train_cost': dataset.total_train_cost,
                             'train_clicks': dataset.total_train_clicks})
